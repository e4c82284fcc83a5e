import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from viewsim.csvio import FormatError, ParseError
from viewsim.dataset import (EPOCH_START, FEATURE_NAMES, LLD_HEADER, N_FEATURES, GeneratorConfig, ImpressionRecord,
                             LldTable, domain_bucket, encode_features, generate_lld, read_lld,
                             sample_auction_stream, split_train_eval, tables_overlap, winners_only, write_lld)


def record(ts=EPOCH_START, **kw):
    base = dict(timestamp=ts, hour_of_day=(ts // 3600) % 24, device_type=0, domain_id=0, position=0,
                cost_micros=0, viewed=False, clicked=False)
    base.update(kw)
    return ImpressionRecord(**base)


class TestRecord:
    def test_hour_must_match_timestamp(self):
        with pytest.raises(ValueError, match="hour_of_day"):
            ImpressionRecord(EPOCH_START, 5, 0, 0, 0, 0, False, False)

    def test_negative_cost_rejected(self):
        with pytest.raises(ValueError):
            record(cost_micros=-1)

    def test_table_indexing(self, small_table):
        r = small_table[3]
        assert isinstance(r, ImpressionRecord)
        assert small_table.take([3])[0] == r
        assert small_table == list(small_table)


class TestFeatures:
    def test_layout(self):
        assert N_FEATURES == 18 and len(FEATURE_NAMES) == 18
        x = encode_features(LldTable.from_records([record(device_type=2, position=1, domain_id=5)]))[0]
        assert x[2] == 1.0 and x[:4].sum() == 1.0
        assert x[5] == 1.0 and x[4:7].sum() == 1.0
        assert x[-1] == 1.0
        assert x[9:17].sum() == 1.0 and x[9 + int(domain_bucket(5))] == 1.0
        np.testing.assert_allclose(x[7:9], [0.0, 1.0], atol=1e-15)  # hour 0

    def test_domain_bucket_range(self):
        b = domain_bucket(np.arange(10_000))
        assert b.min() == 0 and b.max() == 7
        assert len(np.unique(b)) == 8


class TestGenerator:
    def test_deterministic(self, tmp_path):
        cfg = GeneratorConfig(n_records=3000, seed=42)
        write_lld(generate_lld(cfg), tmp_path / "a.csv")
        write_lld(generate_lld(cfg), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_sorted_and_consistent(self, small_table):
        assert np.all(np.diff(small_table.timestamp) >= 0)
        np.testing.assert_array_equal(small_table.hour_of_day, (small_table.timestamp // 3600) % 24)

    def test_decoupled_costs(self):
        table, p = generate_lld(GeneratorConfig(n_records=100_000, cost_view_coupling=0.0), return_latent=True)
        assert abs(np.corrcoef(p, table.cost_micros)[0, 1]) <= 0.02

    def test_zero_weights_half_view_rate(self):
        table = generate_lld(GeneratorConfig(n_records=100_000, true_view_weights=(0.0,) * N_FEATURES))
        assert 0.49 <= table.view_rate() <= 0.51

    def test_view_rate_matches_latent(self):
        table, p = generate_lld(GeneratorConfig(n_records=100_000, seed=7), return_latent=True)
        se = np.sqrt(np.sum(p * (1 - p))) / len(p)
        assert abs(table.view_rate() - p.mean()) <= 3 * se

    def test_view_rate_increases_across_latent_deciles(self):
        table, p = generate_lld(GeneratorConfig(n_records=100_000), return_latent=True)
        edges = np.quantile(p, np.linspace(0, 1, 11))
        bins = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, 9)
        rates = np.array([table.viewed[bins == k].mean() for k in range(10)])
        assert np.all(np.diff(rates) > -0.01)
        assert rates[-1] - rates[0] > 0.5

    @pytest.mark.parametrize("kw", [dict(n_records=0), dict(cost_lognormal_sigma=0.0), dict(true_view_weights=(1.0,))])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            GeneratorConfig(**kw)


class TestLldIO:
    def test_round_trip(self, small_table, tmp_path):
        path = tmp_path / "lld.csv"
        write_lld(small_table, path)
        assert read_lld(path) == small_table
        text = path.read_text()
        assert text.splitlines()[0] == ",".join(LLD_HEADER)
        assert "\r" not in text

    def test_boundary_values(self, tmp_path):
        big = 2**62
        ts = (big // 3600) * 3600
        rows = [record(ts=0, domain_id=0, cost_micros=0),
                record(ts=ts, device_type=3, position=2, domain_id=big, cost_micros=big, viewed=True, clicked=True)]
        write_lld(rows, tmp_path / "b.csv")
        assert read_lld(tmp_path / "b.csv") == rows

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("ts,hour,device_type,domain_id,position,cost_micros,viewed,clicked\n")
        with pytest.raises(FormatError, match="timestamp"):
            read_lld(p)

    def test_reordered_header_names_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("hour_of_day,timestamp,device_type,domain_id,position,cost_micros,viewed,clicked\n")
        with pytest.raises(FormatError, match="'timestamp'"):
            read_lld(p)

    def test_parse_error_line(self, small_table, tmp_path):
        p = tmp_path / "x.csv"
        write_lld(small_table.take(np.arange(5)), p)
        lines = p.read_text().splitlines()
        fields = lines[3].split(",")
        fields[5] = "abc"
        lines[3] = ",".join(fields)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as err:
            read_lld(p)
        assert err.value.line == 4

    def test_boolean_must_be_01(self, small_table, tmp_path):
        p = tmp_path / "x.csv"
        write_lld(small_table.take(np.arange(2)), p)
        p.write_text(p.read_text().replace(",0\n", ",true\n", 1))
        with pytest.raises(ParseError):
            read_lld(p)


class TestSplitAndSample:
    def test_half_split(self, small_table):
        sub = small_table.take(np.arange(100))
        train, ev = split_train_eval(sub)
        assert (len(train), len(ev)) == (50, 50)
        assert train.timestamp.max() <= ev.timestamp.min()
        assert not tables_overlap(train, ev)

    def test_quarter_split(self, default_table):
        train, ev = split_train_eval(default_table.take(np.arange(100_000)), 0.25)
        assert (len(train), len(ev)) == (25_000, 75_000)

    def test_degenerate(self, small_table):
        with pytest.raises(ValueError):
            split_train_eval(small_table.take([0]))
        with pytest.raises(ValueError):
            split_train_eval(small_table, 1.0)

    def test_sorts_unsorted_input(self, small_table):
        shuffled = small_table.take(np.random.default_rng(0).permutation(len(small_table)))
        train, ev = split_train_eval(shuffled)
        assert train.timestamp.max() <= ev.timestamp.min()

    def test_sample_permutation(self, small_table):
        s = sample_auction_stream(small_table, len(small_table), seed=3)
        np.testing.assert_array_equal(np.sort(s.row_matrix(), axis=0), np.sort(small_table.row_matrix(), axis=0))
        assert s == sample_auction_stream(small_table, len(small_table), seed=3)

    def test_sample_with_replacement(self, small_table):
        sub = small_table.take(np.arange(50))
        s = sample_auction_stream(sub, 100, seed=1)
        rows = {tuple(r) for r in sub.row_matrix()}
        assert all(tuple(r) in rows for r in s.row_matrix())

    def test_sample_errors(self):
        with pytest.raises(ValueError):
            sample_auction_stream(LldTable.empty(), 3, 0)

    def test_overlap_detection(self, small_table):
        a = small_table.take(np.arange(0, 10))
        b = small_table.take(np.arange(9, 20))
        assert tables_overlap(a, b)

    def test_winners_only(self, small_table):
        bids = np.full(len(small_table), 2500)
        won = winners_only(small_table, bids)
        assert np.all(won.cost_micros <= 2500)
        assert len(won) == int(np.sum(small_table.cost_micros <= 2500))


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 3), st.integers(0, 10**6), st.integers(0, 2),
                          st.integers(0, 10**9), st.booleans(), st.booleans()), min_size=1, max_size=30))
def test_round_trip_property(tmp_path_factory, rows):
    recs = [record(ts=EPOCH_START + h * 3600, device_type=d, domain_id=dom, position=pos, cost_micros=c,
                   viewed=v, clicked=k) for h, d, dom, pos, c, v, k in rows]
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    write_lld(recs, path)
    assert read_lld(path) == recs
