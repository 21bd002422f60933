import json

import numpy as np
import pytest

import remogen


@pytest.fixture(scope="module")
def model():
    return remogen.init_model(joints=5, seed=3)


def test_model_properties(model):
    assert model.joints == 5
    assert model.feature_dim == remogen.synthetic_motion(joints=5, frames=2).shape[1]
    assert model.modules == ["hhi", "hsi"]


def test_engine_segment_and_history(model):
    engine = remogen.Engine(model, "seed = 4\nalpha = hhi=1.0")
    engine.push_partner(remogen.synthetic_motion(joints=5, frames=6, seed=1))
    seg = engine.sample_segment()
    assert seg.shape == (8, model.feature_dim)
    assert seg.dtype == np.float32
    assert np.isfinite(seg).all()
    assert engine.active_modules == ["hhi"]
    assert engine.history.shape == (2, model.feature_dim)
    again = remogen.Engine(model, "seed = 4\nalpha = hhi=1.0")
    again.push_partner(remogen.synthetic_motion(joints=5, frames=6, seed=1))
    np.testing.assert_array_equal(again.sample_segment(), seg)


def test_fwsr_steps_one_frame_at_a_time(model):
    engine = remogen.Engine(model, "fwsr = true")
    frames = [engine.fwsr_step() for _ in range(10)]
    assert all(f.shape == (1, model.feature_dim) for f in frames)
    assert engine.frames_generated == 10


def test_config_errors_surface_as_exceptions(model):
    with pytest.raises(remogen.ConfigError):
        remogen.Engine(model, "width = 7")
    engine = remogen.Engine(model)
    with pytest.raises(remogen.DimensionError):
        engine.push_partner(np.zeros(3, dtype=np.float32))
    assert issubclass(remogen.CorruptArchiveError, remogen.FormatError)


def test_compose_single_module_passes_through():
    rng = np.random.default_rng(0)
    d = {0: rng.normal(size=(3, 4)).astype(np.float32)}
    out = remogen.compose_deltas({"a": d}, {"a": 1.0})
    np.testing.assert_array_equal(out[0], d[0])


def test_compose_clamps_to_strongest_branch():
    rng = np.random.default_rng(1)
    a = {0: rng.normal(size=(3, 4)), 1: rng.normal(size=(3, 4))}
    b = {0: rng.normal(size=(3, 4)), 1: rng.normal(size=(3, 4))}
    out = remogen.compose_deltas({"a": a, "b": b}, {"a": 2.0, "b": 2.0})

    def norm(d):
        return np.sqrt(sum(float(np.sum(np.square(v))) for v in d.values()))

    assert norm(out) <= max(norm(a), norm(b)) + 1e-6


def test_sensitivity_of_linear_map():
    a = np.arange(12, dtype=np.float64).reshape(4, 3) / 10.0
    s = remogen.estimate_sensitivity(lambda z: list(a @ np.asarray(z)), np.ones(3))
    np.testing.assert_allclose(s, np.linalg.norm(a, axis=0), atol=1e-6)


def test_metrics():
    assert remogen.frechet_distance(np.array([[0.0], [2.0]]), np.array([[2.0], [4.0]])) == pytest.approx(4.0)
    t = np.arange(10, dtype=np.float64)
    quad = np.stack([np.stack([0.01 * t * t, t, 0 * t], axis=-1)], axis=1)
    assert remogen.peak_jerk(quad, 10.0) < 1e-6
    rng = np.random.default_rng(2)
    m = rng.normal(size=(128, 8))
    r = remogen.retrieval_metrics(m, m)
    assert r["r_precision"][1] == 1.0
    assert r["batches"] == 2


def test_motion_and_voxel_files(tmp_path):
    frames = remogen.synthetic_motion(joints=5, frames=12, seed=2)
    path = str(tmp_path / "m.rmgm")
    remogen.save_motion(path, frames, 10.0, 5)
    back, fps, joints = remogen.load_motion(path)
    np.testing.assert_array_equal(back, frames)
    assert (fps, joints) == (10.0, 5)
    dims, occupied = remogen.voxelize(np.array([[0.05, 0.05, 0.05], [0.95, 0.95, 0.95]]), (0, 0, 0), (1, 1, 1), 0.1,
                                      str(tmp_path / "v.rmgv"))
    assert dims == [10, 10, 10]
    assert occupied == 2
    with pytest.raises(remogen.FormatError):
        remogen.load_motion(str(tmp_path / "v.rmgv"))


def test_model_archive_round_trip(model, tmp_path):
    path = str(tmp_path / "w.rmgw")
    model.save(path)
    loaded = remogen.Model.load(path)
    a = remogen.Engine(model, "seed = 9").sample_segment()
    b = remogen.Engine(loaded, "seed = 9").sample_segment()
    np.testing.assert_array_equal(a, b)


def test_stream_is_deterministic(model):
    partner = remogen.synthetic_motion(joints=5, frames=10, seed=5)
    lines = [json.dumps({"kind": "partner_pose", "t": t, "pose": partner[t].tolist()}) for t in range(10)]
    text = "\n".join(lines) + "\n"
    first = remogen.stream(model, text, "fwsr = true")
    assert first == remogen.stream(model, text, "fwsr = true")
    records = [json.loads(x) for x in first.splitlines()]
    assert records[-1]["kind"] == "end"
    assert sum(r["kind"] == "ego_pose" for r in records) == 10


def test_bench_report(model):
    report = json.loads(remogen.bench(model, frames=8, slide_frames=2))
    assert report["slide_over_fwsr"] > 0.0
