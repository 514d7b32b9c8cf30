import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lungscan.backends import FakeEmbedder, FakeSegmenter
from lungscan.data import BoundingBox, Mask, ScanVolume, SliceImage
from lungscan.errors import BackendError, DegenerateEmbedding, EmptyMask, NoCandidates
from lungscan.segmentation import (
    PipelineConfig,
    compute_bbox,
    cosine_similarity,
    crop_with_mask,
    filter_masks,
    segment_slice,
    segment_slice_detailed,
    segment_volume,
    select_roi,
    write_segmentation,
)
from lungscan.synthetic import make_phantom, phantom_backends
from lungscan.volume_io import load_mask


def _mask_with_area(n, shape=(10, 100)):
    bits = np.zeros(shape[0] * shape[1], bool)
    bits[:n] = True
    return Mask(bits.reshape(shape))


# ---- filter

def test_filter_rule_example():
    masks = [_mask_with_area(a) for a in (10, 500, 900)]
    out = filter_masks(masks, 0.05, 1000)
    assert [m.area for m in out] == [500]


def test_filter_tau_zero_drops_empty_and_background():
    masks = [_mask_with_area(a) for a in (0, 1, 899, 900, 1000)]
    assert [m.area for m in filter_masks(masks, 0.0, 1000)] == [1, 899]


def test_filter_empty():
    assert filter_masks([], 0.1, 100) == []


def test_filter_keeps_order():
    masks = [_mask_with_area(a) for a in (300, 200, 400)]
    assert filter_masks(masks, 0.1, 1000) == masks


# ---- crop

def test_crop_full_mask_is_identity(rng):
    img = rng.uniform(size=(6, 9))
    np.testing.assert_array_equal(crop_with_mask(img, Mask(np.ones((6, 9), bool))), img)


def test_crop_rectangle():
    img = np.ones((8, 10))
    bits = np.zeros((8, 10), bool)
    bits[2:5, 3:7] = True
    out = crop_with_mask(img, Mask(bits))
    assert out.shape == (3, 4)
    assert np.all(out == 1.0)


def test_crop_zero_image():
    bits = np.zeros((8, 10), bool)
    bits[1, 1] = bits[4, 6] = True
    out = crop_with_mask(np.zeros((8, 10)), Mask(bits))
    assert out.shape == (4, 6) and not out.any()


def test_crop_zeroes_outside_mask():
    img = np.full((3, 3), 0.7)
    bits = np.eye(3, dtype=bool)
    out = crop_with_mask(img, Mask(bits))
    np.testing.assert_array_equal(out, np.eye(3) * 0.7)


def test_crop_empty_mask():
    with pytest.raises(EmptyMask):
        crop_with_mask(np.zeros((3, 3)), Mask.zeros((3, 3)))


# ---- cosine similarity

def test_cosine_examples():
    assert cosine_similarity([3, 4], [3, 4]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_cosine_zero_vector():
    with pytest.raises(DegenerateEmbedding):
        cosine_similarity([0, 0], [1, 0])


vec = st.lists(st.floats(-100, 100), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3)


@given(vec, vec, st.floats(1e-3, 1e3))
def test_cosine_symmetric_and_scale_invariant(v, w, alpha):
    s = cosine_similarity(v, w)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(cosine_similarity(w, v), abs=1e-12)
    assert cosine_similarity(np.multiply(alpha, v), w) == pytest.approx(s, abs=1e-12)


# ---- ROI selection

class _TableEmbedder:
    """Maps crop values (constant crops) to preset image vectors."""

    thread_safe = True

    def __init__(self, table):
        self.table = table

    def embed_image(self, img):
        return np.asarray(self.table[float(img.flat[0])], float)

    def embed_text(self, s):
        raise AssertionError


def test_select_single_crop():
    emb = _TableEmbedder({0.5: [1, 0]})
    assert select_roi([np.full((2, 2), 0.5)], emb, [0.3, 0.7])[0] == 0


def test_select_picks_best():
    w = np.array([1.0, 0.0])
    # similarities 0.2 and 0.9 by construction
    v0 = [0.2, math.sqrt(1 - 0.04)]
    v1 = [0.9, math.sqrt(1 - 0.81)]
    emb = _TableEmbedder({0.1: v0, 0.2: v1})
    idx, score = select_roi([(3, np.full((1, 1), 0.1)), (7, np.full((1, 1), 0.2))], emb, w)
    assert idx == 1 and score == pytest.approx(0.9)


def test_select_tie_lowest_index():
    emb = _TableEmbedder({0.1: [1, 1], 0.2: [2, 2]})
    assert select_roi([np.full((1, 1), 0.1), np.full((1, 1), 0.2)], emb, [1, 0])[0] == 0


def test_select_empty():
    with pytest.raises(NoCandidates):
        select_roi([], FakeEmbedder(), [1, 0, 0, 0])


def test_select_invariant_to_positive_rescaling(rng):
    for _ in range(200):
        vecs = rng.normal(size=(6, 4))
        scales = rng.uniform(0.01, 100, size=6)
        w = rng.normal(size=4)
        a = select_roi([np.full((1, 1), i / 10) for i in range(6)],
                       _TableEmbedder({i / 10: vecs[i] for i in range(6)}), w)[0]
        b = select_roi([np.full((1, 1), i / 10) for i in range(6)],
                       _TableEmbedder({i / 10: vecs[i] * scales[i] for i in range(6)}), w * 3.7)[0]
        assert a == b


# ---- bounding box

def test_bbox_two_points():
    bits = np.zeros((10, 10), bool)
    bits[3, 2] = bits[7, 5] = True  # (x=2, y=3) and (x=5, y=7)
    assert compute_bbox(Mask(bits)).as_tuple() == (2, 3, 5, 7)


def test_bbox_single_pixel():
    bits = np.zeros((9, 9), bool)
    bits[4, 4] = True
    assert compute_bbox(Mask(bits)) == BoundingBox(4, 4, 4, 4)


def test_bbox_empty():
    with pytest.raises(EmptyMask):
        compute_bbox(Mask.zeros((3, 3)))


def test_bbox_scan_oracle(rng):
    for _ in range(300):
        bits = rng.uniform(size=tuple(rng.integers(1, 15, 2))) < rng.uniform(0.01, 0.3)
        if not bits.any():
            continue
        xs = [x for y in range(bits.shape[0]) for x in range(bits.shape[1]) if bits[y, x]]
        ys = [y for y in range(bits.shape[0]) for x in range(bits.shape[1]) if bits[y, x]]
        assert compute_bbox(Mask(bits)).as_tuple() == (min(xs), min(ys), max(xs), max(ys))


# ---- config

@pytest.mark.parametrize("kw", [{"tau_fraction": 1.0}, {"tau_fraction": -0.1}, {"grid_n": 0},
                                {"roi_mode": "both"}, {"roi_mode": "single", "prompts": {"a": ["x"], "b": ["y"]}}])
def test_pipeline_config_invariants(kw):
    with pytest.raises(ValueError):
        PipelineConfig(**kw)


def test_pipeline_config_defaults():
    cfg = PipelineConfig()
    assert cfg.tau_fraction == 0.02 and cfg.grid_n == 32 and cfg.roi_mode == "per-lung"
    assert cfg.targets == ("right_lung", "left_lung")


# ---- whole slice

def test_phantom_per_lung():
    ph = make_phantom()
    seg, emb = phantom_backends(ph)
    res = segment_slice_detailed(ph.image, seg, emb, PipelineConfig())
    assert res.mask == ph.lungs
    assert not (res.mask.bits & ph.parts["center"].bits).any()
    assert [r.target for r in res.rois] == ["right_lung", "left_lung"]


def test_phantom_excludes_first_winner():
    # both targets point at the right lung; the second must fall back to another part
    ph = make_phantom()
    seg, emb = phantom_backends(ph)
    cfg = PipelineConfig(prompts={"right_lung": ("r",), "again": ("r2",)})
    from lungscan.synthetic import target_vectors

    v = target_vectors(ph.image, ph.parts, ("right_lung",))["right_lung"]
    emb = FakeEmbedder({"r": v, "r2": v})
    res = segment_slice_detailed(ph.image, seg, emb, cfg)
    chosen = [r.mask_index for r in res.rois]
    assert len(set(chosen)) == 2


def test_single_mode_one_candidate():
    img = np.zeros((20, 20))
    bits = np.zeros((20, 20), bool)
    bits[4:10, 5:12] = True
    cand = Mask(bits)
    seg = FakeSegmenter.for_image(img, [cand])
    cfg = PipelineConfig(roi_mode="single", prompts={"lungs": ("lungs",)})
    emb = FakeEmbedder({"lungs": [0.1, 0.2, 0.3, 0.4]})
    out = segment_slice(img, seg, emb, cfg)
    assert out == seg.segment_with_box(img, compute_bbox(cand))


def test_all_background_slice():
    img = np.zeros((10, 10))
    seg = FakeSegmenter.for_image(img, [Mask(np.ones((10, 10), bool))])
    cfg = PipelineConfig(roi_mode="single", prompts={"lungs": ("l",)})
    with pytest.raises(NoCandidates):
        segment_slice(img, seg, FakeEmbedder({"l": [1, 1, 1, 1]}), cfg)


def test_final_mask_inside_box_union():
    ph = make_phantom(48, 64)
    seg, emb = phantom_backends(ph)
    res = segment_slice_detailed(ph.image, seg, emb, PipelineConfig())
    allowed = np.zeros_like(res.mask.bits)
    parts_union = np.zeros_like(allowed)
    for m in seg.segment_everything(ph.image):
        parts_union |= m.bits
    for roi in res.rois:
        allowed |= roi.box.to_mask(ph.image.shape).bits & parts_union
    assert not (res.mask.bits & ~allowed).any()


def test_slice_determinism():
    ph = make_phantom()
    seg, emb = phantom_backends(ph)
    a = segment_slice(ph.image, seg, emb, PipelineConfig())
    b = segment_slice(ph.image, seg, emb, PipelineConfig())
    assert a == b and a.bits.tobytes() == b.bits.tobytes()


# ---- volume

def _volume(n, degenerate=()):
    seg = FakeSegmenter()
    slices = []
    cfg = PipelineConfig()
    vecs = None
    from lungscan.synthetic import target_vectors

    for i in range(n):
        ph = make_phantom(40, 60, jitter=0.05, rng=i)
        slices.append(SliceImage(ph.image))
        if i in degenerate:
            seg.add(ph.image, [ph.parts["background"]])
        else:
            seg.add(ph.image, list(ph.parts.values()))
        if vecs is None:
            vecs = target_vectors(ph.image, ph.parts)
    emb = FakeEmbedder({p: vecs[t] for t, ps in cfg.prompts.items() for p in ps})
    return ScanVolume("v", slices), seg, emb, cfg


def test_volume_all_ok():
    vol, seg, emb, cfg = _volume(3)
    res = segment_volume(vol, seg, emb, cfg)
    assert len(res.masks) == 3 and res.flagged == []


def test_volume_degenerate_slice_flagged():
    vol, seg, emb, cfg = _volume(3, degenerate={1})
    res = segment_volume(vol, seg, emb, cfg)
    assert res.flagged == [1]
    assert res.masks[1].area == 0 and res.masks[1].shape == vol.slices[1].shape
    assert res.slices[1].status == "no_candidates"


def test_volume_determinism_and_worker_order():
    vol, seg, emb, cfg = _volume(6, degenerate={4})
    a = segment_volume(vol, seg, emb, cfg, workers=1)
    b = segment_volume(vol, seg, emb, cfg, workers=4)
    assert a.masks == b.masks
    assert a.report_records() == b.report_records()


def test_volume_backend_error_carries_index():
    vol, seg, emb, cfg = _volume(2)
    bad = ScanVolume("v", [vol.slices[0], SliceImage(np.full((40, 60), 0.3))])
    with pytest.raises(BackendError) as exc:
        segment_volume(bad, seg, emb, cfg)
    assert exc.value.slice_index == 1


def test_volume_serializes_single_threaded_backend():
    vol, seg, emb, cfg = _volume(4)
    calls = {"active": 0, "max": 0}

    class Watched:
        thread_safe = False

        def segment_everything(self, image, grid):
            calls["active"] += 1
            calls["max"] = max(calls["max"], calls["active"])
            try:
                return seg.segment_everything(image, grid)
            finally:
                calls["active"] -= 1

        def segment_with_box(self, image, box):
            return seg.segment_with_box(image, box)

    res = segment_volume(vol, Watched(), emb, cfg, workers=4)
    assert calls["max"] == 1
    assert res.masks == segment_volume(vol, seg, emb, cfg).masks


def test_write_segmentation_layout(tmp_path):
    vol, seg, emb, cfg = _volume(2, degenerate={0})
    res = segment_volume(vol, seg, emb, cfg)
    write_segmentation(tmp_path, res)
    assert load_mask(tmp_path / "v" / "1.mask.png") == res.masks[1]
    lines = (tmp_path / "v" / "status.jsonl").read_text().splitlines()
    assert '"status": "no_candidates"' in lines[0] and '"status": "ok"' in lines[1]
    assert '"roi_scores"' in lines[1]
