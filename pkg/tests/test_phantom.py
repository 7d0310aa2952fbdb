import numpy as np
import pytest

from bronco.errors import ParameterError
from bronco.phantom import (
    DEFAULT_INTENSITIES,
    PhantomSpec,
    Segment,
    Sphere,
    bronchi_phantom,
    generate,
    pipeline_phantom,
    random_capsule_tree,
)


def test_single_segment_capsule_membership():
    spec = PhantomSpec(
        dims=(24, 24, 24),
        segments=[Segment((6, 12, 12), (18, 12, 12), 3.0, "vessel")],
    )
    ct, lung, truth = generate(spec)
    vessel = truth.tissue_mask("vessel")
    ax = np.arange(24, dtype=float)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    t = np.clip((X - 6) / 12.0, 0, 1)
    d2 = (X - (6 + 12 * t)) ** 2 + (Y - 12) ** 2 + (Z - 12) ** 2
    assert np.array_equal(vessel.data, d2 <= 9.0)


def test_y_tree_truth_topology():
    spec = PhantomSpec(
        dims=(40, 40, 40),
        segments=[
            Segment((20, 20, 6), (20, 20, 20), 3.0, "vessel"),
            Segment((20, 20, 20), (12, 20, 30), 2.5, "vessel", parent=0),
            Segment((20, 20, 20), (28, 20, 30), 2.5, "vessel", parent=0),
        ],
    )
    _, _, truth = generate(spec)
    endpoints = set()
    for s in truth.segments:
        endpoints.add(tuple(s.start))
        endpoints.add(tuple(s.end))
    assert len(endpoints) == 4
    assert len(truth.centerlines) == 3


def test_same_seed_bit_identical():
    spec = pipeline_phantom(seed=9, dims=(64, 64, 64))
    ct1, _, _ = generate(spec)
    ct2, _, _ = generate(spec)
    assert np.array_equal(ct1.data, ct2.data)


def test_noise_free_values_are_tissue_constants():
    spec = PhantomSpec(
        dims=(24, 24, 24),
        segments=[Segment((6, 12, 12), (18, 12, 12), 3.0, "vessel")],
        lungs=[((12, 12, 12), (10, 10, 10))],
        noise_std=0.0,
    )
    ct, _, _ = generate(spec)
    values = set(np.unique(ct.data).tolist())
    allowed = {DEFAULT_INTENSITIES[k] for k in ("air", "parenchyma", "vessel", "wall", "body")}
    assert values <= allowed


def test_tissue_partition_inside_lungs():
    spec = pipeline_phantom(seed=2, dims=(64, 64, 64))
    _, lung, truth = generate(spec)
    t = truth.tissue.data[lung.data]
    assert (t > 0).all()  # everything inside the lung region carries a tissue class


def test_child_thicker_than_parent_rejected():
    spec = PhantomSpec(
        dims=(40, 40, 40),
        segments=[
            Segment((20, 20, 8), (20, 20, 20), 2.0, "vessel"),
            Segment((20, 20, 20), (20, 12, 30), 3.0, "vessel", parent=0),
        ],
    )
    with pytest.raises(ParameterError, match="thicker"):
        generate(spec)


def test_out_of_bounds_segment_rejected():
    spec = PhantomSpec(dims=(20, 20, 20),
                       segments=[Segment((2, 10, 10), (18, 10, 10), 3.0, "vessel")])
    with pytest.raises(ParameterError, match="margin"):
        generate(spec)


def test_incompatible_overlap_rejected():
    spec = PhantomSpec(
        dims=(40, 40, 40),
        segments=[
            Segment((10, 20, 20), (30, 20, 20), 3.0, "vessel"),
            Segment((20, 12, 20), (20, 28, 20), 3.0, "air"),
        ],
    )
    with pytest.raises(ParameterError, match="incompatible"):
        generate(spec)


def test_specks_are_single_vessel_voxels_in_parenchyma():
    spec = PhantomSpec(
        dims=(48, 48, 48),
        lungs=[((24, 24, 24), (18, 18, 18))],
        speck_count=12,
        seed=3,
    )
    _, lung, truth = generate(spec)
    vessel = truth.tissue_mask("vessel")
    assert vessel.count == 12
    assert not (vessel.data & ~lung.data).any()


def test_spec_json_round_trip():
    spec = pipeline_phantom(seed=5, consolidation=True)
    back = PhantomSpec.from_json_dict(spec.to_json_dict())
    assert back.dims == spec.dims
    assert len(back.segments) == len(spec.segments)
    assert back.defects[0].radius == spec.defects[0].radius
    ct1, _, _ = generate(spec)
    ct2, _, _ = generate(back)
    assert np.array_equal(ct1.data, ct2.data)


def test_random_capsule_tree_respects_bounds_and_radii():
    for seed in (0, 1, 2):
        mask, segs, paths = random_capsule_tree(seed)
        assert 3 <= len(segs) <= 7
        for s in segs:
            assert 2.0 <= s.radius <= 4.0
            if s.parent is not None:
                assert s.radius <= segs[s.parent].radius
        assert mask.data.any()
        assert not mask.data[0].any() and not mask.data[-1].any()


def test_bronchi_phantom_masks_consistent():
    ph = bronchi_phantom(seed=1)
    assert not ph["trachea"].is_empty()
    assert not ph["air_tree"].is_empty()
    assert ph["pocket"].is_empty()
    ph2 = bronchi_phantom(seed=1, hole=True)
    assert not ph2["pocket"].is_empty()
    # pocket sits inside the lung region, outside the tree
    assert not (ph2["pocket"].data & ~ph2["lung"].data).any()
    assert not (ph2["pocket"].data & ph2["air_tree"].data).any()
