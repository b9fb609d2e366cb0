import json

import numpy as np
import pytest

from boxforge.anchor_grid import (
    DetectorSpec,
    canonical_spec,
    count_parameters,
    fork_anchors,
    generate_anchors,
    head_parameters,
)


def test_canonical_constants():
    spec = canonical_spec()
    assert spec.K == 8732
    assert spec.C == 4
    assert spec.layer_sizes == (5776, 2166, 600, 150, 36, 4)


def test_generate_anchor_blocks():
    spec = canonical_spec()
    a = generate_anchors(spec)
    assert len(a) == 8732
    assert a.layer_offsets == (0, 5776, 7942, 8542, 8692, 8728)
    for i, n in enumerate(spec.layer_sizes):
        assert len(a.layer(i)) == n
    last = a.layer(5)
    centers = (last[:, :2] + last[:, 2:]) / 2
    assert np.allclose(centers, 0.5)


def test_anchors_clipped_and_ordered():
    a = generate_anchors(canonical_spec()).anchors
    assert np.all(a >= 0) and np.all(a <= 1)
    assert np.all(a[:, 0] <= a[:, 2]) and np.all(a[:, 1] <= a[:, 3])


def test_first_cell_layout():
    # first cell of the 38x38 map: small square, larger square, then 2:1 and 1:2
    a = generate_anchors(canonical_spec()).anchors
    c = 0.5 / 38
    s = 0.1
    big = np.sqrt(0.1 * 0.2)
    expected = np.array(
        [
            [c - s / 2, c - s / 2, c + s / 2, c + s / 2],
            [c - big / 2, c - big / 2, c + big / 2, c + big / 2],
            [c - s * np.sqrt(2) / 2, c - s / np.sqrt(2) / 2, c + s * np.sqrt(2) / 2, c + s / np.sqrt(2) / 2],
            [c - s / np.sqrt(2) / 2, c - s * np.sqrt(2) / 2, c + s / np.sqrt(2) / 2, c + s * np.sqrt(2) / 2],
        ]
    )
    assert np.allclose(a[:4], np.clip(expected, 0, 1))
    # row-major: third cell is further along x, same row
    assert np.allclose((a[8, 0] + a[8, 2]) / 2, 2.5 / 38)
    assert np.allclose(a[8, 1], a[0, 1])


def test_generation_is_deterministic():
    a = generate_anchors(canonical_spec()).anchors
    b = generate_anchors(canonical_spec()).anchors
    assert np.array_equal(a, b)


def test_anchor_set_is_read_only():
    a = generate_anchors(canonical_spec())
    with pytest.raises(ValueError):
        a.anchors[0, 0] = 1.0


def test_mismatched_lengths_rejected():
    d = canonical_spec().to_dict()
    d["g"] = d["g"][:-1]
    with pytest.raises(ValueError, match="length"):
        DetectorSpec.from_dict(d)


def test_k_inconsistent_with_ratios_rejected():
    d = canonical_spec().to_dict()
    d["k"][0] = 6
    with pytest.raises(ValueError, match="inconsistent"):
        DetectorSpec.from_dict(d)


def test_spec_json_roundtrip():
    spec = canonical_spec()
    again = DetectorSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec
    assert set(spec.to_dict()) == {"F", "k", "g", "C", "scales", "aspect_ratios", "variances"}


def test_small_custom_spec():
    spec = DetectorSpec(F=2, k=(2, 4), g=(2, 1), C=1, scales=((0.3, 0.5), (0.5, 0.9)), aspect_ratios=((), (2,)))
    a = generate_anchors(spec)
    assert len(a) == spec.K == 2 * 4 + 4


def test_fork_replicas_share_geometry():
    base = generate_anchors(canonical_spec())
    fork = fork_anchors(base, 4)
    assert all(fork.replica(c) is base for c in range(4))
    with pytest.raises(IndexError):
        fork.replica(4)


def test_parameter_counts():
    spec = canonical_spec()
    baseline = count_parameters(spec, "baseline")
    fork = count_parameters(spec, "fork")
    naive = count_parameters(spec, "naive_replication")
    assert abs(baseline - 24.1e6) <= 0.08 * 24.1e6
    assert abs(fork - 25.6e6) <= 0.08 * 25.6e6
    assert abs((fork - baseline) - 1.5e6) <= 0.15 * 1.5e6
    assert naive == 4 * baseline
    assert fork > baseline


def test_head_difference_matches_channel_arithmetic():
    spec = canonical_spec()
    ch = (512, 1024, 512, 256, 256, 256)
    weights = sum(9 * c * k * (20 - 9) for c, k in zip(ch, spec.k))
    biases = sum(k * (20 - 9) for k in spec.k)
    assert head_parameters(spec, "fork") - head_parameters(spec, "baseline") == weights + biases


def test_unknown_head():
    with pytest.raises(ValueError):
        count_parameters(canonical_spec(), "wide")
