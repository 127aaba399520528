import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uga.data import (
    CYCLE_TAGS,
    BatteryRecord,
    LabeledSet,
    SyntheticShiftSpec,
    gen_battery_curves,
    gen_cubic_shift,
    ingest_battery_csv,
    make_cubic_shift_pair,
    normalize_labels,
    split_by_cycle,
    read_vector_csv,
    window,
    windows_to_set,
    write_battery_csv,
    write_vector_csv,
)


def fake_series(n, tag="UDDS", hz=1.0):
    rng = np.random.default_rng(0)
    return [BatteryRecord(t=i / hz, v=3.5 + rng.normal(0, 0.01), i=1.0,
                          temp=25.0, soc=1.0 - i / max(n, 1), cycle=tag)
            for i in range(n)]


class TestCubicGenerator:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticShiftSpec(scale=0.0)
        with pytest.raises(ValueError):
            SyntheticShiftSpec(noise_sd=-1.0)
        with pytest.raises(ValueError):
            SyntheticShiftSpec(n=0)

    def test_noiseless_cubic_relation(self):
        ds = gen_cubic_shift(SyntheticShiftSpec(n=500, seed=3))
        x = ds.inputs.ravel()
        np.testing.assert_allclose(ds.labels, x ** 3 / 64.0, rtol=1e-12)
        assert np.all(np.abs(x) <= 4.0)

    def test_seed_determinism(self):
        spec = SyntheticShiftSpec(shift=1.0, noise_sd=0.05, n=200, seed=9)
        a, b = gen_cubic_shift(spec), gen_cubic_shift(spec)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)

    def test_shift_moves_inputs_not_labels(self):
        src = gen_cubic_shift(SyntheticShiftSpec(n=4000, seed=1))
        tgt = gen_cubic_shift(SyntheticShiftSpec(shift=2.0, n=4000, seed=2))
        assert abs(src.inputs.mean()) < 0.2
        assert abs(tgt.inputs.mean() - 2.0) < 0.2
        # label ranges coincide because labels come from the latent draw
        assert abs(src.labels.min() - tgt.labels.min()) < 0.05
        assert abs(src.labels.max() - tgt.labels.max()) < 0.05

    def test_pair_normalization(self):
        src, tgt, bounds = make_cubic_shift_pair(
            SyntheticShiftSpec(n=1000, seed=1, noise_sd=0.05),
            SyntheticShiftSpec(shift=2.0, n=1000, seed=2, noise_sd=0.05))
        for ds in (src, tgt):
            assert ds.labels.min() >= 0.0
            assert ds.labels.max() <= 1.0
        assert src.labels.min() == 0.0
        assert src.labels.max() == 1.0
        roundtrip = bounds.apply(bounds.invert(np.linspace(0, 1, 11)))
        np.testing.assert_allclose(roundtrip, np.linspace(0, 1, 11), atol=1e-12)


class TestNormalizeLabels:
    def test_min_max_arithmetic(self):
        ds = LabeledSet(np.zeros((3, 1)), [0.0, 50.0, 100.0])
        normalized, bounds = normalize_labels(ds)
        np.testing.assert_array_equal(normalized.labels, [0.0, 0.5, 1.0])
        assert (bounds.lo, bounds.hi) == (0.0, 100.0)

    def test_hidden_labels_same_map(self):
        ds = LabeledSet(np.zeros((2, 1)), [0.0, 10.0])
        _n, hidden, bounds = normalize_labels(ds, np.array([5.0, 20.0]))
        np.testing.assert_array_equal(hidden, [0.5, 2.0])
        assert bounds.invert(0.5) == 5.0

    def test_degenerate_labels_rejected(self):
        ds = LabeledSet(np.zeros((3, 1)), [2.0, 2.0, 2.0])
        with pytest.raises(ValueError):
            normalize_labels(ds)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            LabeledSet(np.zeros((3, 1)), [1.0, 2.0])


class TestBatterySimulator:
    def test_soc_endpoints_and_monotonicity(self):
        for series in gen_battery_curves(25.0, n_cycles=2, seed=4,
                                         capacity_ah=0.05):
            socs = np.array([r.soc for r in series])
            assert socs[0] == 1.0
            assert socs[-1] == 0.0
            assert np.all(np.diff(socs) <= 0)
            assert np.all((socs >= 0) & (socs <= 1))

    def test_cold_capacity_smaller(self):
        cold = gen_battery_curves(-20.0, 1, seed=7, capacity_ah=0.05)[0]
        warm = gen_battery_curves(25.0, 1, seed=7, capacity_ah=0.05)[0]
        assert len(cold) < len(warm)

    def test_cold_voltage_sag_larger(self):
        cold = gen_battery_curves(-20.0, 1, seed=8, capacity_ah=0.05)[0]
        warm = gen_battery_curves(25.0, 1, seed=8, capacity_ah=0.05)[0]
        n = min(len(cold), len(warm))
        # identical current draws over the shared prefix, colder resistance
        assert np.mean([r.v for r in cold[1:n]]) < np.mean([r.v for r in warm[1:n]])

    def test_tags_cycle_through_vocabulary(self):
        series_list = gen_battery_curves(25.0, 6, seed=1, capacity_ah=0.02)
        assert tuple(s[0].cycle for s in series_list) == CYCLE_TAGS

    def test_time_strictly_increasing(self):
        series = gen_battery_curves(25.0, 1, seed=2, capacity_ah=0.02)[0]
        ts = np.array([r.t for r in series])
        assert np.all(np.diff(ts) > 0)

    def test_seed_determinism(self):
        a = gen_battery_curves(0.0, 2, seed=11, capacity_ah=0.02)
        b = gen_battery_curves(0.0, 2, seed=11, capacity_ah=0.02)
        assert a == b


class TestIngestion:
    def test_round_trip_and_downsampling(self, tmp_path):
        series_list = gen_battery_curves(25.0, 2, seed=5, capacity_ah=0.02, hz=10.0)
        path = tmp_path / "battery.csv"
        write_battery_csv(series_list, path)
        ingested = ingest_battery_csv(path)
        assert len(ingested) == 2
        for raw, ds in zip(series_list, ingested):
            assert len(ds) == pytest.approx(len(raw) / 10, abs=2)
            assert all(b.t - a.t >= 1.0 for a, b in zip(ds, ds[1:]))

    def test_bucket_arithmetic(self, tmp_path):
        series = [fake_series(1000, hz=10.0)]
        path = tmp_path / "b.csv"
        write_battery_csv(series, path)
        assert len(ingest_battery_csv(path)[0]) == 100

    def test_idempotent_on_1hz(self, tmp_path):
        series = [fake_series(50, hz=1.0)]
        path = tmp_path / "b.csv"
        write_battery_csv(series, path)
        once = ingest_battery_csv(path)
        write_battery_csv(once, path)
        assert ingest_battery_csv(path) == once

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("time_s,voltage_v,current_a,temp_c,cycle\n0,3.5,1,25,US06\n")
        with pytest.raises(ValueError, match="soc"):
            ingest_battery_csv(path)

    def test_non_monotone_time_rejected(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text(
            "time_s,voltage_v,current_a,temp_c,soc,cycle\n"
            "0,3.5,1,25,1.0,US06\n"
            "2,3.5,1,25,0.9,US06\n"
            "1,3.5,1,25,0.8,US06\n")
        with pytest.raises(ValueError, match="non-monotone"):
            ingest_battery_csv(path)

    def test_soc_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text(
            "time_s,voltage_v,current_a,temp_c,soc,cycle\n"
            "0,3.5,1,25,1.5,US06\n")
        with pytest.raises(ValueError, match="soc"):
            ingest_battery_csv(path)

    def test_contiguous_blocks_form_series(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text(
            "time_s,voltage_v,current_a,temp_c,soc,cycle\n"
            "0,3.5,1,25,1.0,US06\n"
            "1,3.5,1,25,0.9,US06\n"
            "0,3.5,1,25,1.0,LA92\n"
            "0,3.5,1,25,1.0,US06\n")
        ingested = ingest_battery_csv(path)
        assert [s[0].cycle for s in ingested] == ["US06", "LA92", "US06"]


class TestWindowing:
    def test_counts(self):
        assert len(window(fake_series(250), 100, 1)) == 151
        assert len(window(fake_series(100), 100, 1)) == 1
        with pytest.raises(ValueError):
            window(fake_series(99), 100, 1)

    def test_label_is_final_soc(self):
        series = fake_series(120)
        for k, (w, label) in enumerate(window(series, 100, 1)):
            assert label == series[k + 99].soc
            assert w.shape == (100, 3)
            np.testing.assert_array_equal(w[-1], [series[k + 99].v,
                                                  series[k + 99].i,
                                                  series[k + 99].temp])

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            window(fake_series(100), 100, 0)

    @settings(max_examples=60, deadline=None)
    @given(length=st.integers(1, 40), extra=st.integers(0, 150),
           stride=st.integers(1, 17))
    def test_count_formula(self, length, extra, stride):
        n = length + extra
        got = len(window(fake_series(n), length, stride))
        want = sum(1 for s in range(0, n) if s % stride == 0 and s + length <= n)
        assert got == want == (n - length) // stride + 1

    def test_windows_to_set_stacks(self):
        series_list = [fake_series(120), fake_series(130)]
        ds = windows_to_set(series_list, length=100, stride=10)
        assert ds.inputs.shape == (3 + 4, 100, 3)
        assert ds.labels.shape == (7,)


class TestSplit:
    def make_series(self, tags):
        return [fake_series(5, tag=t) for t in tags]

    def test_panasonic_membership(self):
        series = self.make_series(CYCLE_TAGS)
        train, test = split_by_cycle(series, "Panasonic")
        assert sorted(s[0].cycle for s in test) == ["LA92", "NN", "US06"]
        assert sorted(s[0].cycle for s in train) == ["HWFET", "Mixed", "UDDS"]

    def test_lg_membership(self):
        series = self.make_series(CYCLE_TAGS)
        train, test = split_by_cycle(series, "LG")
        assert sorted(s[0].cycle for s in test) == ["HWFET", "LA92", "US06"]
        assert sorted(s[0].cycle for s in train) == ["Mixed", "NN", "UDDS"]

    def test_partition_exact(self):
        series = self.make_series(CYCLE_TAGS * 3)
        train, test = split_by_cycle(series, "LG")
        assert len(train) + len(test) == len(series)
        ids = {id(s) for s in train} | {id(s) for s in test}
        assert len(ids) == len(series)

    def test_unknown_cycle_rejected(self):
        with pytest.raises(ValueError, match="cycle"):
            split_by_cycle(self.make_series(["WLTP"]), "LG")

    def test_unknown_dataset_rejected(self):
        with pytest.raises(ValueError, match="dataset"):
            split_by_cycle(self.make_series(["US06"]), "Tesla")


class TestVectorCsv:
    def test_labeled_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(17, 3))
        y = rng.uniform(size=17)
        path = tmp_path / "v.csv"
        write_vector_csv(path, x, y)
        xb, yb = read_vector_csv(path)
        assert np.array_equal(x, xb)
        assert np.array_equal(y, yb)
        assert path.read_text().splitlines()[0] == "x0,x1,x2,y"

    def test_unlabeled_round_trip(self, tmp_path):
        x = np.array([[0.25], [1.0 / 3.0]])
        path = tmp_path / "u.csv"
        write_vector_csv(path, x)
        xb, yb = read_vector_csv(path)
        assert yb is None
        assert np.array_equal(x, xb)

    def test_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,y\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_vector_csv(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y\n1.0,2.0\n3.0\n")
        with pytest.raises(ValueError, match="row 3"):
            read_vector_csv(path)

    def test_empty_body_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y\n")
        with pytest.raises(ValueError, match="no data"):
            read_vector_csv(path)
