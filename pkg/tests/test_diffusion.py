import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazelift import geometry as geo
from gazelift.diffusion import (HypothesisSet, aggregate, ddim_step, forward_noise, initial_noise,
                                load_hypotheses, make_schedule, sample_hypotheses, save_hypotheses)
from gazelift.errors import (CorruptFile, InvalidT, MissingGroundTruth, TimestepOrder,
                             TimestepOutOfRange)

from conftest import skeleton_with_gaze

J = geo.NUM_JOINTS


def test_linear_schedule_t2():
    s = make_schedule(2, "linear")
    np.testing.assert_allclose(s.alpha_bars, [1 - 1e-4, (1 - 1e-4) * (1 - 0.02)], rtol=1e-15)


@pytest.mark.parametrize("kind", ["cosine", "linear"])
@pytest.mark.parametrize("T", [2, 10, 100, 1000])
def test_schedule_invariants(kind, T):
    s = make_schedule(T, kind)
    assert len(s.betas) == len(s.alpha_bars) == T
    assert np.all(np.diff(s.alpha_bars) < 0)
    assert np.all((s.alpha_bars > 0) & (s.alpha_bars < 1))
    assert np.all((s.betas > 0) & (s.betas < 1))
    if kind == "linear" or T >= 20:
        # a cosine schedule with very few steps starts with a large beta
        assert s.alpha_bars[0] > 0.99


def test_cosine_closed_form():
    s = make_schedule(100)
    f = lambda t: np.cos((t / 100 + 0.008) / 1.008 * np.pi / 2) ** 2
    assert s.alpha_bars[0] == pytest.approx(f(1) / f(0), rel=1e-12)
    assert s.alpha_bars[0] > 0.999
    assert s.alpha_bars[-1] < 0.01


def test_invalid_T():
    with pytest.raises(InvalidT):
        make_schedule(1)
    with pytest.raises(InvalidT):
        make_schedule(10).inference_timesteps(11)


def test_inference_timesteps():
    s = make_schedule(1000)
    ts = s.inference_timesteps(20)
    assert ts[0] == 999 and len(ts) == 20 and ts[-1] == 49
    assert all(a - b == 50 for a, b in zip(ts, ts[1:]))
    assert s.inference_timesteps(1) == [999]


def test_forward_noise_examples():
    s = make_schedule(1000)
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((J, 3))
    np.testing.assert_array_equal(forward_noise(x0, 500, np.zeros_like(x0), s), np.sqrt(s.alpha_bars[500]) * x0)
    np.testing.assert_allclose(forward_noise(x0, 0, rng.standard_normal(x0.shape), s), x0, atol=0.05)
    with pytest.raises(TimestepOutOfRange):
        forward_noise(x0, 1000, x0, s)
    with pytest.raises(TimestepOutOfRange):
        forward_noise(x0, -1, x0, s)


def test_forward_noise_monte_carlo():
    s = make_schedule(1000)
    t = 300
    x0 = np.linspace(-1, 1, J * 3).reshape(J, 3)
    eps = np.random.default_rng(1).standard_normal((10000, J, 3))
    out = forward_noise(x0, t, eps, s)
    n = len(eps)
    var = 1 - s.alpha_bars[t]
    se_mean = np.sqrt(var / n)
    assert np.all(np.abs(out.mean(0) - np.sqrt(s.alpha_bars[t]) * x0) < 3 * se_mean + 1e-12)
    se_var = var * np.sqrt(2 / (n - 1))
    assert np.abs(out.var(0, ddof=1) - var).max() < 4 * se_var


def test_ddim_step():
    s = make_schedule(1000)
    rng = np.random.default_rng(2)
    x, x0 = rng.standard_normal((2, J, 3))
    assert ddim_step(x, 49, -1, x0, s) is x0
    with pytest.raises(TimestepOrder):
        ddim_step(x, 10, 10, x0, s)
    with pytest.raises(TimestepOrder):
        ddim_step(x, 10, 20, x0, s)


def test_perfect_denoiser_chain():
    s = make_schedule(1000)
    rng = np.random.default_rng(3)
    x0 = rng.standard_normal((50, J, 3))
    ts = s.inference_timesteps(20)
    x = forward_noise(x0, ts[0], rng.standard_normal(x0.shape), s)
    for i, t in enumerate(ts):
        x = ddim_step(x, t, ts[i + 1] if i + 1 < len(ts) else -1, x0, s)
    assert np.abs(x - x0).max() < 1e-5


def test_sample_hypotheses_determinism_and_diversity():
    s = make_schedule(1000)
    den = lambda x, t: 0.5 * x
    a = sample_hypotheses(den, H=1, N=5, seeds=7, sched=s)
    b = sample_hypotheses(den, H=1, N=5, seeds=7, sched=s)
    assert a.hypotheses.tobytes() == b.hypotheses.tobytes()
    h3 = sample_hypotheses(den, H=3, N=5, seeds=7, sched=s).hypotheses
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.linalg.norm(h3[i] - h3[j]) > 0


def test_fixed_pose_denoiser():
    P = np.random.default_rng(4).standard_normal((J, 3))
    hs = sample_hypotheses(lambda x, t: np.broadcast_to(P, x.shape), H=5, N=7, seeds=1)
    np.testing.assert_array_equal(hs.hypotheses, np.broadcast_to(P, (5, J, 3)))


def test_batched_equals_sequential():
    den = lambda x, t: np.tanh(x) * 0.9 + 0.01 * t / 1000
    batch = sample_hypotheses(den, H=4, N=6, seeds=[3, 9, 11])
    for hs, seed in zip(batch, [3, 9, 11]):
        single = sample_hypotheses(den, H=4, N=6, seeds=seed)
        np.testing.assert_array_equal(hs.hypotheses, single.hypotheses)
    # one hypothesis at a time
    h1 = [sample_hypotheses(lambda x, t: den(x, t), H=4, N=6, seeds=3).hypotheses[h] for h in range(4)]
    np.testing.assert_array_equal(np.stack(h1), batch[0].hypotheses)


def test_initial_noise_per_hypothesis():
    a = initial_noise(5, 4)
    b = initial_noise(5, 2)
    np.testing.assert_array_equal(a[:2], b)


# -- aggregation --------------------------------------------------------------

def test_aggregate_single_hypothesis():
    rng = np.random.default_rng(5)
    h = rng.standard_normal((1, J, 3))
    gt = rng.standard_normal((J, 3))
    for mode in ("AVG", "ORC_P", "ORC_G", "ORC_J"):
        np.testing.assert_array_equal(aggregate(h, mode, gt), h[0])


def test_aggregate_avg_symmetric():
    rng = np.random.default_rng(6)
    P, D = rng.standard_normal((2, J, 3))
    np.testing.assert_allclose(aggregate(np.stack([P + D, P - D]), "AVG"), P, atol=1e-15)


def _rotate_about(v, axis, deg):
    axis = axis / np.linalg.norm(axis)
    a = np.radians(deg)
    return v * np.cos(a) + np.cross(axis, v) * np.sin(a) + axis * (axis @ v) * (1 - np.cos(a))


def test_aggregate_orc_g_picks_smallest_angle():
    rng = np.random.default_rng(7)
    g = np.array([0.0, 0.0, 1.0])
    gt = skeleton_with_gaze(rng, g)
    hyps = []
    for deg in (10, 5, 20):
        d = _rotate_about(g, np.cross(g, rng.standard_normal(3)), deg)
        hyps.append(skeleton_with_gaze(rng, d))
    hyps = np.stack(hyps)
    errs = geo.angular_error_3d(geo.gaze_vector_from_skeleton(hyps), g)
    np.testing.assert_allclose(errs, [10, 5, 20], atol=1e-9)
    np.testing.assert_array_equal(aggregate(hyps, "ORC_G", gt), hyps[1])


def test_aggregate_requires_gt():
    h = np.zeros((2, J, 3))
    for mode in ("ORC_P", "ORC_G", "ORC_J"):
        with pytest.raises(MissingGroundTruth):
            aggregate(h, mode)
    with pytest.raises(ValueError):
        aggregate(h, "MEDIAN")


def test_aggregate_ties_lowest_index():
    gt = np.zeros((J, 3))
    gt[geo.GAZE] = (0, 0, 0.3)
    h = np.stack([gt + 0.1, gt + 0.1, gt])
    h[0, :] = gt + 0.2
    assert np.array_equal(aggregate(h[1:], "ORC_P", gt), h[2])
    same = np.stack([gt + 0.1, gt - 0.1])
    np.testing.assert_array_equal(aggregate(same, "ORC_P", gt), same[0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_oracle_invariants(seed, H):
    rng = np.random.default_rng(seed)
    gt = skeleton_with_gaze(rng, rng.standard_normal(3) / 1.7 + [0, 0, 1])
    hyp = gt + rng.standard_normal((H, J, 3)) * 0.1
    g = geo.gaze_vector_from_skeleton(gt)
    hyp_err = geo.angular_error_3d(geo.gaze_vectors_or_nan(hyp), g)
    orc_g = aggregate(hyp, "ORC_G", gt)
    assert geo.angular_error_3d(geo.gaze_vector_from_skeleton(orc_g), g) <= hyp_err.min() + 1e-12
    orc_p = aggregate(hyp, "ORC_P", gt)
    assert geo.mpjpe(orc_p, gt) <= geo.mpjpe(hyp, gt).min() + 1e-12
    orc_j = aggregate(hyp, "ORC_J", gt)
    assert np.all(geo.joint_errors(orc_j, gt) <= geo.joint_errors(hyp, gt).min(0) + 1e-12)
    assert geo.mpjpe(orc_j, gt) <= geo.mpjpe(orc_p, gt) + 1e-12
    # permutation invariance (distinct errors almost surely)
    perm = rng.permutation(H)
    for mode in ("AVG", "ORC_P", "ORC_G", "ORC_J"):
        np.testing.assert_allclose(aggregate(hyp[perm], mode, gt), aggregate(hyp, mode, gt), atol=1e-12)


def test_aggregate_batched_matches_loop():
    rng = np.random.default_rng(8)
    gts = np.stack([skeleton_with_gaze(rng, [0, 0, 1.0]) for _ in range(5)])
    hyp = gts[:, None] + rng.standard_normal((5, 6, J, 3)) * 0.1
    for mode in ("AVG", "ORC_P", "ORC_G", "ORC_J"):
        batched = aggregate(hyp, mode, gts)
        for i in range(5):
            np.testing.assert_array_equal(batched[i], aggregate(hyp[i], mode, gts[i]))


def test_hypotheses_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    sets = [HypothesisSet(rng.standard_normal((4, J, 3)), seed=s, N=20, record_id=i)
            for i, s in enumerate((0, 5, 2**40))]
    path = tmp_path / "h.gzhy"
    save_hypotheses(path, sets, {"H": 4})
    back, meta = load_hypotheses(path)
    assert meta["H"] == "4"
    for a, b in zip(sets, back):
        assert (a.seed, a.N, a.record_id) == (b.seed, b.N, b.record_id)
        np.testing.assert_array_equal(a.hypotheses, b.hypotheses)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(CorruptFile):
        load_hypotheses(path)
