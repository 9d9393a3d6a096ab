import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sme_advisor.dataset import (
    CRITERIA, BinningRule, DataError, SyntheticConfig, ValueClass, bin_values, bin_with_cuts, fit_standardize,
    generate_synthetic, instance_ids, kfold, largest_remainder, one_hot, parse_labeled_value, read_csv,
    save_csv, load_csv, split, standardize, tertile_cuts, to_csv,
)
from sme_advisor.numerics import ContractError

L, M, H = ValueClass.LOW, ValueClass.MEDIUM, ValueClass.HIGH

HEADER = "id,bank_0,ext_0,buyers_value,buyers_class,demand_value,demand_class,competitors_value,competitors_class,survived_5yr\n"


@pytest.mark.parametrize("text,expected", [
    ("361-H", (361.0, H)), ("50-L", (50.0, L)), ("10000-M", (10000.0, M)), ("12500-L", (12500.0, L)),
])
def test_parse_labeled_value_table_rows(text, expected):
    assert parse_labeled_value(text) == expected


@pytest.mark.parametrize("bad", ["abc-H", "361-X", "361", "-H", ""])
def test_parse_labeled_value_rejects(bad):
    with pytest.raises(DataError, match="cannot parse"):
        parse_labeled_value(bad)


def test_one_hot():
    assert one_hot(M).tolist() == [0, 1, 0]
    assert one_hot(L).tolist() == [1, 0, 0]
    with pytest.raises(ContractError):
        one_hot(H, [L, M])


@given(st.sampled_from([L, M, H]))
def test_one_hot_is_basis_vector(c):
    v = one_hot(c)
    assert v.sum() == 1 and set(v.tolist()) <= {0.0, 1.0}


def test_bin_values_examples():
    assert bin_values(range(1, 10)) == [L, L, L, M, M, M, H, H, H]
    assert bin_values([5, 5, 5, 5]) == [M] * 4
    assert bin_values([50, 200, 400], BinningRule((100, 300))) == [L, M, H]
    assert bin_values([100, 300], BinningRule((100, 300))) == [M, M]


def test_binning_rule_validates():
    with pytest.raises(ContractError):
        BinningRule((3, 1))


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=80, unique=True))
def test_tertile_class_counts(values):
    counts = np.bincount([int(c) for c in bin_values(values)], minlength=3)
    n = len(values)
    assert set(counts.tolist()) <= {n // 3, -(-n // 3)}


def test_tertile_cuts_reuse_same_rule():
    v = np.arange(10.0)
    assert bin_with_cuts(v, tertile_cuts(v)).tolist() == [int(c) for c in bin_values(v)]


def test_standardize_examples():
    X = np.array([[2.0, 5.0], [4.0, 5.0]])
    p = fit_standardize(X)
    assert p.apply(X).tolist() == [[-1.0, 0.0], [1.0, 0.0]]
    with pytest.raises(ContractError):
        fit_standardize(X[:1])


def test_standardize_dataset_moments_and_reapply(small_data):
    out, params = standardize(small_data)
    assert np.allclose(out.X.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(out.X.std(axis=0), 1, atol=1e-9)
    assert np.array_equal(params.apply(small_data.X), out.X)


def test_split_sizes():
    assert [len(s) for s in split(100, (0.6, 0.2, 0.2), 0)] == [60, 20, 20]
    assert [len(s) for s in split(10, (0.5, 0.25, 0.25), 0)] == [5, 3, 2]
    assert largest_remainder(10, (0.5, 0.25, 0.25)) == [5, 3, 2]


def test_split_deterministic_and_validated():
    a, b = split(30, seed=4), split(30, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    for bad in [(0.5, 0.5, 0.0), (0.5, 0.3, 0.3), (1.0,)]:
        with pytest.raises(ContractError):
            split(10, bad)


@given(st.integers(3, 300), st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.integers(0, 2**32))
def test_split_partitions(m, a, b, seed):
    total = a + b + 0.3
    parts = split(m, (a / total, b / total, 0.3 / total), seed)
    joined = np.concatenate(parts)
    assert sorted(joined.tolist()) == list(range(m))


def test_kfold_sizes():
    assert sorted(np.bincount(kfold(10, 5, 0).fold_membership).tolist()) == [2] * 5
    assert sorted(np.bincount(kfold(10, 3, 0).fold_membership).tolist()) == [3, 3, 4]
    for k in (1, 11):
        with pytest.raises(ContractError):
            kfold(10, k)


@given(st.integers(2, 200), st.data())
def test_kfold_partition_law(m, data):
    k = data.draw(st.integers(2, m))
    plan = kfold(m, k, data.draw(st.integers(0, 1000)))
    tests = [plan.test_indices(f) for f in range(k)]
    assert sorted(np.concatenate(tests).tolist()) == list(range(m))
    sizes = [len(t) for t in tests]
    assert max(sizes) - min(sizes) <= 1
    for f in range(k):
        assert len(np.intersect1d(plan.train_indices(f), tests[f])) == 0


def test_read_csv_counts_and_provenance():
    text = HEADER + "".join(f"{c},1.5,2,10,L,20,M,30,H,1\n" for c in "ABC")
    data = read_csv(text)
    assert data.m == 3
    assert [c.provenance for c in data.columns] == ["bank", "external"]


def test_read_csv_combined_labels():
    text = "id,bank_0,buyers,demand,competitors,survived_5yr\nB,1,12500-L,361-H,50-L,\n"
    data = read_csv(text)
    assert data.values["buyers"][0] == 12500 and data.classes["buyers"][0] == int(L)
    assert np.isnan(data.survived[0])


def test_read_csv_missing_column_named():
    text = HEADER.replace("demand_value,", "") + "A,1,2,10,L,M,30,H,1\n"
    with pytest.raises(DataError, match="demand_value"):
        read_csv(text)


def test_read_csv_row_errors_carry_row_number():
    with pytest.raises(DataError, match="row 3"):
        read_csv(HEADER + "A,1,2,10,L,20,M,30,H,1\nB,x,2,10,L,20,M,30,H,1\n")
    with pytest.raises(DataError, match="row 2"):
        read_csv(HEADER + "A,1,2\n")


def test_read_csv_unlabeled_sites():
    data = read_csv("id,bank_0,ext_0\nS1,1,2\n", require_labels=False)
    assert np.isnan(data.values["demand"][0])


def test_csv_roundtrip(tmp_path, small_data):
    path = tmp_path / "d.csv"
    save_csv(small_data, path)
    back = load_csv(path)
    assert back.ids == small_data.ids
    assert np.max(np.abs(back.X - small_data.X)) <= 1e-12
    for c in CRITERIA:
        assert np.array_equal(back.values[c], small_data.values[c])
        assert np.array_equal(back.classes[c], small_data.classes[c])
    assert np.array_equal(back.survived, small_data.survived)


def test_synthetic_table_shape():
    data = generate_synthetic(SyntheticConfig(m=26))
    assert data.ids == tuple("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
    assert instance_ids(28)[-2:] == ["AA", "AB"]
    assert data.has_survival


def test_synthetic_deterministic_csv():
    cfg = SyntheticConfig(m=40, seed=9)
    assert to_csv(generate_synthetic(cfg)) == to_csv(generate_synthetic(cfg))


def test_synthetic_zero_noise_is_affine_in_latents():
    # with no noise the features are an exact rank-3 mix of the latents, so the
    # criteria must lie in the affine span of the features
    data = generate_synthetic(SyntheticConfig(m=50, noise_stddev=0.0, seed=2))
    A = np.column_stack([data.X, np.ones(data.m)])
    for c in CRITERIA:
        coef, *_ = np.linalg.lstsq(A, data.values[c], rcond=None)
        assert np.max(np.abs(A @ coef - data.values[c])) < 1e-6


def test_synthetic_criteria_share_signal():
    data = generate_synthetic(SyntheticConfig(m=2000, seed=0))
    corr = np.corrcoef(data.labels())
    assert corr[0, 1] > 0.2 and corr[1, 2] > 0.2


def test_synthetic_config_validation():
    for bad in (dict(m=0), dict(noise_stddev=-1.0), dict(planted_features=(99,))):
        with pytest.raises(ContractError):
            SyntheticConfig(**bad)


def test_dataset_subset_and_labels(small_data):
    sub = small_data.subset([2, 0])
    assert sub.ids == (small_data.ids[2], small_data.ids[0])
    assert small_data.labels().shape == (3, small_data.m)
    assert len(small_data.schema_hash) == 16


def test_csv_source_stream():
    data = read_csv(io.StringIO(HEADER + "A,1,2,10,L,20,M,30,H,0\n"))
    assert data.survived.tolist() == [0.0]
