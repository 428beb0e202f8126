import numpy as np
import pytest

from permcurriculum.errors import ParseError, RejectedInput, ValidationError
from permcurriculum.nncore import make_rng
from permcurriculum.permset import PermutationSet, generate_set
from permcurriculum.toydata import (
    SPLITS, DatasetSpec, gen_spatial_dataset, gen_temporal_dataset, load_dataset, make_permuted_batch,
    normalize_parts, save_dataset,
)

SPATIAL = DatasetSpec(kind="spatial", n_train=400, n_val=100, n_test=60, seed=1)
TEMPORAL = DatasetSpec(kind="temporal", n_train=400, n_val=100, n_test=60, seed=2)


@pytest.fixture(scope="module")
def spatial():
    return gen_spatial_dataset(SPATIAL)


@pytest.fixture(scope="module")
def temporal():
    return gen_temporal_dataset(TEMPORAL)


def test_generation_is_deterministic(spatial, temporal):
    assert gen_spatial_dataset(SPATIAL).parts.tobytes() == spatial.parts.tobytes()
    assert gen_temporal_dataset(TEMPORAL) == temporal
    other = gen_spatial_dataset(DatasetSpec(kind="spatial", n_train=400, n_val=100, n_test=60, seed=9))
    assert not np.array_equal(other.parts, spatial.parts)


def test_shapes_and_range(spatial, temporal):
    assert spatial.parts.shape == (560, 4, 64) and temporal.parts.shape == (560, 4, 64)
    for ds in (spatial, temporal):
        assert ds.parts.min() >= 0.0 and ds.parts.max() <= 1.0


def test_class_balance_per_split(spatial, temporal):
    for ds in (spatial, temporal):
        for split in SPLITS:
            labels = ds.split(split)[1]
            counts = np.bincount(labels, minlength=8)
            assert np.all(np.abs(counts - len(labels) / 8) <= 1)


def test_normalization_zero_mean_unit_max(spatial):
    x = normalize_parts(spatial.parts[:50])
    assert np.max(np.abs(x.mean(axis=-1))) < 1e-9
    assert np.allclose(np.abs(x).max(axis=-1), 1.0)
    assert np.array_equal(normalize_parts(np.full((1, 2, 3), 0.4)), np.zeros((1, 2, 3)))


def test_linear_probe_on_single_tiles_is_informative_but_not_perfect(spatial):
    # least-squares one-vs-rest probe predicting tile position from a raw tile
    train, test = spatial.split("train")[0], spatial.split("test")[0]

    def design(parts):
        x = parts.reshape(-1, 64).astype(np.float64)
        return np.hstack([x, np.ones((len(x), 1))]), np.tile(np.arange(4), len(parts))

    X, pos = design(train)
    W = np.linalg.lstsq(X, np.eye(4)[pos], rcond=None)[0]
    Xt, post = design(test)
    acc = np.mean((Xt @ W).argmax(axis=1) == post)
    assert 0.25 < acc < 1.0


def test_frames_pairwise_distinct(temporal):
    for clip in temporal.parts:
        for i in range(4):
            for j in range(i + 1, 4):
                assert not np.array_equal(clip[i], clip[j])


def test_reversed_clips_never_match_forward_clips(temporal):
    forward = {clip.tobytes() for clip in temporal.parts}
    assert not any(clip[::-1].tobytes() in forward for clip in temporal.parts)


def test_spec_rejections():
    with pytest.raises(RejectedInput):
        gen_spatial_dataset(DatasetSpec(kind="spatial", m=1))
    with pytest.raises(RejectedInput):
        gen_temporal_dataset(DatasetSpec(kind="temporal", u=1))
    with pytest.raises(RejectedInput):
        gen_spatial_dataset(DatasetSpec(kind="temporal"))
    with pytest.raises(RejectedInput):
        gen_spatial_dataset(DatasetSpec(kind="spatial", n_val=0))


# ------------------------------------------------------------------ batches

def test_identity_permutation_without_jitter_only_normalizes(spatial):
    ident = PermutationSet(4, [[0, 1, 2, 3], [1, 0, 3, 2]], 0)
    parts = spatial.parts[:5]
    x, y = make_permuted_batch(parts, ident, [(i, 0) for i in range(5)])
    assert np.array_equal(x, normalize_parts(parts))
    assert np.array_equal(y, np.zeros(5))


def test_batch_permutes_and_labels(spatial):
    ps = generate_set(4, 24, 0)
    assign = [(3, 7), (0, 2), (3, 23)]
    x, y = make_permuted_batch(spatial.parts, ps, assign)
    assert y.tolist() == [7, 2, 23]
    for row, (sid, pid) in enumerate(assign):
        expected = normalize_parts(spatial.parts[sid][list(ps.table[pid])])
        assert np.array_equal(x[row], expected)


def test_batch_determinism_and_jitter(spatial):
    ps = generate_set(4, 24, 0)
    assign = [(i, i % 24) for i in range(10)]
    a = make_permuted_batch(spatial.parts, ps, assign)[0]
    assert np.array_equal(a, make_permuted_batch(spatial.parts, ps, assign)[0])
    j1 = make_permuted_batch(spatial.parts, ps, assign, rng=make_rng(1))[0]
    j2 = make_permuted_batch(spatial.parts, ps, assign, rng=make_rng(1))[0]
    assert np.array_equal(j1, j2) and not np.array_equal(j1, a)


def test_batch_id_errors(spatial):
    ps = generate_set(4, 24, 0)
    with pytest.raises(RejectedInput):
        make_permuted_batch(spatial.parts, ps, [(len(spatial.parts), 0)])
    with pytest.raises(RejectedInput):
        make_permuted_batch(spatial.parts, ps, [(0, 24)])
    with pytest.raises(RejectedInput):
        make_permuted_batch(spatial.parts, generate_set(3, 6, 0), [(0, 0)])


# ---------------------------------------------------------------------- io

def test_round_trip(tmp_path, temporal):
    save_dataset(temporal, tmp_path / "t.data")
    assert load_dataset(tmp_path / "t.data") == temporal


def test_truncated_payload_names_byte_counts(tmp_path, spatial):
    path = tmp_path / "s.data"
    save_dataset(spatial, path)
    path.write_bytes(path.read_bytes()[:-10])
    expected = 560 * 4 * 64 * 4 + 560 * 4
    with pytest.raises(ParseError, match=f"holds {expected - 10} bytes, expected {expected}"):
        load_dataset(path)


def test_header_part_count_mismatch(tmp_path, spatial):
    path = tmp_path / "s.data"
    save_dataset(spatial, path)
    data = path.read_bytes()
    nl = data.index(b"\n")
    header = data[:nl].replace(b'"m": 2', b'"m": 3')
    path.write_bytes(header + data[nl:])
    with pytest.raises(ValidationError, match="9 parts"):
        load_dataset(path)


def test_malformed_header(tmp_path):
    path = tmp_path / "bad.data"
    path.write_bytes(b"{oops\n\x00\x00")
    with pytest.raises(ParseError, match="byte offset 0"):
        load_dataset(path)
    path.write_bytes(b"no newline")
    with pytest.raises(ParseError, match="byte offset"):
        load_dataset(path)
