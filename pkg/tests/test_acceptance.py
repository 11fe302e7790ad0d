"""End-to-end acceptance criteria 1-8.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends
with one PASS/FAIL line per criterion. Criteria 5-7 share the models trained
on the 8k benchmark (about an hour on one core in total).
"""

import dataclasses
import math
import time

import numpy as np
import pytest
import torch

from conftest import random_unit
from gazelift import geometry as geo
from gazelift import scenes
from gazelift.diffusion import aggregate, ddim_step, forward_noise, make_schedule, sample_hypotheses
from gazelift.harness import (TrainConfig, baseline_fixed_bias, baseline_frontal_gaze, evaluate, train)
from gazelift.harness.cli import main
from gazelift.harness.report import read_csv_rows
from gazelift.harness.train import loss_reduction, overfit_one_sample
from gazelift.model import GazePoseDenoiser, ModelConfig, make_batch

pytestmark = pytest.mark.acceptance

BENCH_N = 10_000          # 8k train / 1k val / 1k test
BENCH_SEED = 0
BENCH_TRAIN = TrainConfig(epochs=20, H=20, N=20)
BENCH_MODEL = ModelConfig(d=32)
SEEDS = (0, 1, 2)
J = geo.NUM_JOINTS


# -- shared benchmark state -------------------------------------------------------

@pytest.fixture(scope="session")
def bench():
    cfg = scenes.SceneConfig()
    recs = scenes.generate_dataset(BENCH_N, BENCH_SEED, cfg)
    ids = scenes.split_ids(BENCH_N, BENCH_SEED, cfg)
    return {"train": [recs[i] for i in ids["train"]], "test": [recs[i] for i in ids["test"]]}


class Runs:
    """Trained models and AVG reports, computed once and shared by criteria 5-7."""

    VARIANTS = {"full": {}, "no_objects": {"use_objects": False}, "no_diffusion": {"use_diffusion": False}}

    def __init__(self, bench):
        self.bench = bench
        self.models, self.reports, self.seconds = {}, {}, {}

    def model(self, variant, seed):
        key = (variant, seed)
        if key not in self.models:
            torch.set_num_threads(1)
            mc = dataclasses.replace(BENCH_MODEL, **self.VARIANTS[variant])
            res = train(self.bench["train"], dataclasses.replace(BENCH_TRAIN, seed=seed), mc)
            self.models[key] = res.model
            self.seconds[key] = res.seconds
        return self.models[key]

    def report(self, variant, seed, H=20, N=20):
        key = (variant, seed, H, N)
        if key not in self.reports:
            model = self.model(variant, seed)
            t0 = time.time()
            self.reports[key] = evaluate(model, self.bench["test"], H, N, modes=("AVG",), seed=seed,
                                         method=variant)
            self.seconds[key] = time.time() - t0
        return self.reports[key]

    def mae(self, variant, seed, H=20, N=20, object_only=False):
        mask = (lambda s: s.object_driven) if object_only else None
        return self.report(variant, seed, H, N).mean(variant, "AVG", "mae3d", mask)


@pytest.fixture(scope="session")
def runs(bench):
    return Runs(bench)


# -- 1: geometry oracles ----------------------------------------------------------

@pytest.mark.criterion(1)
def test_criterion_1_geometry_oracles(record_property):
    t0 = time.time()
    rng = np.random.default_rng(101)
    n = 10_000
    d = random_unit(rng, n)
    eyes_l = rng.uniform(-1, 1, (n, 3))
    eyes_r = eyes_l + random_unit(rng, n) * rng.uniform(0.04, 0.08, (n, 1))
    poses = np.zeros((n, J, 3))
    poses[:, geo.LEYE], poses[:, geo.REYE] = eyes_l, eyes_r
    poses[:, geo.GAZE] = geo.gaze_joint_from_direction(eyes_l, eyes_r, d)
    round_trip = np.abs(geo.gaze_vector_from_skeleton(poses) - d).max()

    e = np.eye(3)
    closed = [float(geo.angular_error_3d(e[0], v)) for v in (e[0], e[1], -e[0])]
    closed_ok = closed == [0.0, 90.0, 180.0]

    a, b = random_unit(rng, n), random_unit(rng, n)
    fast = geo.angular_error_3d(a, b)
    brute = np.array([math.degrees(math.acos(max(-1.0, min(1.0, sum(x * y for x, y in zip(u, v))))))
                      for u, v in zip(a.tolist(), b.tolist())])
    oracle_err = np.abs(fast - brute).max()
    seconds = time.time() - t0

    ok = round_trip <= 1e-6 and closed_ok and oracle_err <= 1e-9 and seconds < 5
    record_property("detail", f"round trip {round_trip:.1e}, closed form {closed}, "
                              f"arccos oracle {oracle_err:.1e}, {seconds:.2f} s")
    assert ok


# -- 2: DDIM with a perfect denoiser -----------------------------------------------------

@pytest.mark.criterion(2)
def test_criterion_2_perfect_denoiser(record_property):
    sched = make_schedule(1000)
    rng = np.random.default_rng(102)
    x0 = rng.standard_normal((1000, 1, J, 3))
    oracle = lambda x, t: x0
    # full chain from pure noise (the sampler's own start) ...
    sets = sample_hypotheses(oracle, H=1, N=20, seeds=list(range(1000)), sched=sched)
    from_noise = np.abs(np.stack([s.hypotheses for s in sets]) - x0).max()
    # ... and from a forward-corrupted x0 at the first inference timestep
    ts = sched.inference_timesteps(20)
    x = forward_noise(x0, ts[0], rng.standard_normal(x0.shape), sched)
    for i, t in enumerate(ts):
        x = ddim_step(x, t, ts[i + 1] if i + 1 < len(ts) else -1, oracle(x, t), sched)
    from_corrupted = np.abs(x - x0).max()
    record_property("detail", f"max |x - x0| {from_noise:.1e} (from noise), {from_corrupted:.1e} (from q(x_t|x0))")
    assert from_noise <= 1e-5 and from_corrupted <= 1e-5


# -- 3: oracle aggregation invariants -------------------------------------------------------

@pytest.mark.criterion(3)
def test_criterion_3_oracle_invariants(record_property):
    recs = scenes.generate_dataset(1000, seed=103)
    rng = np.random.default_rng(103)
    gt = np.stack([geo.root_center(r.pose3d_gt) for r in recs])
    scale = rng.uniform(0.01, 0.3, (len(recs), 1, 1, 1))
    hyp = gt[:, None] + rng.standard_normal((len(recs), 20, J, 3)) * scale
    g_true = geo.gaze_vector_from_skeleton(gt)

    hyp_gaze = geo.angular_error_3d(geo.gaze_vectors_or_nan(hyp), g_true[:, None])
    orc_g = geo.angular_error_3d(geo.gaze_vector_from_skeleton(aggregate(hyp, "ORC_G", gt)), g_true)
    v_g = int(np.sum(orc_g[:, None] > hyp_gaze))

    hyp_mpjpe = geo.mpjpe(hyp, gt[:, None])
    orc_p = geo.mpjpe(aggregate(hyp, "ORC_P", gt), gt)
    v_p = int(np.sum(orc_p[:, None] > hyp_mpjpe))

    orc_j = geo.mpjpe(aggregate(hyp, "ORC_J", gt), gt)
    v_j = int(np.sum(orc_j > orc_p))
    record_property("detail", f"violations ORC_G {v_g}, ORC_P {v_p}, ORC_J<=ORC_P {v_j} over 1000 x H=20")
    assert v_g == v_p == v_j == 0


# -- 4: gradient correctness ----------------------------------------------------------

GRAD_PARAMS = (
    "dce.sampling_offsets.weight", "dce.sampling_offsets.bias", "dce.attention_weights.weight",
    "dce.level_proj.0.weight", "dce.pose_proj.weight",
    "p2c.attn.q.weight", "p2c.attn.k.weight", "p2c.attn.v.weight", "p2c.attn.o.weight", "p2c.ffn.0.weight",
    "j2j.attn.q.weight", "j2j.attn.k.weight", "j2j.attn.v.weight", "j2j.attn.o.weight", "j2j.ffn.2.weight",
    "class_embed.weight", "loc_proj.weight", "o2c.attn.q.weight", "o2c.attn.k.weight", "o2c.attn.v.weight",
    "o2c.ffn.0.weight", "merge.weight",
    "head.0.weight", "head.2.weight", "head.4.weight", "head.4.bias",
)


@pytest.mark.criterion(4)
def test_criterion_4_gradients(record_property):
    rec = next(r for r in scenes.generate_dataset(20, seed=104) if len(r.objects) >= 2)
    cfg = ModelConfig(d=8, L=2, grid=8, C=32, heads=2, dce_heads=2, K=2, pose_scale=0.33)
    torch.manual_seed(0)
    model = GazePoseDenoiser(cfg).to(torch.float64)
    batch = make_batch([rec], cfg, dtype=torch.float64)
    x_t = torch.randn(1, J, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(4))
    loss_fn = lambda: torch.mean((model(batch, x_t, 377) - batch.target) ** 2)

    params = dict(model.named_parameters())
    model.zero_grad()
    loss_fn().backward()
    rng = np.random.default_rng(4)
    eps, worst, where, n_checked = 1e-6, 0.0, "", 0
    for name in GRAD_PARAMS:
        p = params[name]
        g = p.grad.detach().reshape(-1).clone()
        # the largest-gradient coordinates plus a few random ones
        idx = np.argsort(-g.abs().numpy())[:3].tolist() + rng.choice(p.numel(), 3, replace=False).tolist()
        flat = p.data.view(-1)
        for i in idx:
            old = flat[i].item()
            with torch.no_grad():
                flat[i] = old + eps
                lp = loss_fn().item()
                flat[i] = old - eps
                lm = loss_fn().item()
                flat[i] = old
            fd, an = (lp - lm) / (2 * eps), g[i].item()
            # gradients below 1e-6 in magnitude are compared absolutely
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            n_checked += 1
            if rel > worst:
                worst, where = rel, f"{name}[{i}]"
    record_property("detail", f"worst relative error {worst:.1e} at {where} over {n_checked} coordinates "
                              f"in {len(GRAD_PARAMS)} tensors")
    assert worst <= 1e-3


# -- 5: trainability ------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_criterion_5_trainability(runs, bench, record_property):
    overfit = loss_reduction(overfit_one_sample(bench["train"][0], steps=200))
    t0 = time.time()
    model_mae = runs.mae("full", BENCH_SEED)
    seconds = runs.seconds[("full", BENCH_SEED)] + (time.time() - t0)
    base = baseline_fixed_bias(bench["train"], bench["test"]).merge(baseline_frontal_gaze(bench["test"]))
    fixed = base.mean("fixed_bias", "-")
    frontal = base.mean("frontal", "-")
    gain_fixed, gain_frontal = 1 - model_mae / fixed, 1 - model_mae / frontal
    record_property("detail", f"overfit x{overfit:.1f}; MAE_3D model {model_mae:.2f} vs fixed bias "
                              f"{fixed:.2f} ({gain_fixed:+.0%}) and frontal {frontal:.2f} ({gain_frontal:+.0%}); "
                              f"train+eval {seconds / 60:.1f} min")
    assert overfit >= 10
    assert gain_fixed >= 0.30 and gain_frontal >= 0.30
    assert seconds < 30 * 60


# -- 6: ablation directions ------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_criterion_6_ablation_directions(runs, record_property):
    full_obj = np.mean([runs.mae("full", s, object_only=True) for s in SEEDS])
    noobj_obj = np.mean([runs.mae("no_objects", s, object_only=True) for s in SEEDS])
    full_all = np.mean([runs.mae("full", s) for s in SEEDS])
    nodiff_all = np.mean([runs.mae("no_diffusion", s) for s in SEEDS])
    gap_obj, gap_diff = noobj_obj / full_obj - 1, nodiff_all / full_all - 1
    record_property("detail", f"object subset: no_objects {noobj_obj:.2f} vs full {full_obj:.2f} "
                              f"({gap_obj:+.1%}); overall: no_diffusion {nodiff_all:.2f} vs full "
                              f"{full_all:.2f} ({gap_diff:+.1%}); mean of seeds {list(SEEDS)}")
    assert gap_obj >= 0.05 and gap_diff >= 0.05


# -- 7: H x N grid sanity ----------------------------------------------------------------

@pytest.mark.criterion(7)
def test_criterion_7_grid(runs, record_property):
    cells = {s: (runs.mae("full", s, 20, 20), runs.mae("full", s, 1, 1)) for s in SEEDS}
    record_property("detail", "; ".join(f"seed {s}: (20,20) {a:.2f} vs (1,1) {b:.2f}"
                                        for s, (a, b) in cells.items()))
    assert all(a <= b for a, b in cells.values())


# -- 8: reproducibility ----------------------------------------------------------------

def _pipeline(root):
    root.mkdir()
    data = root / "data.gzsc"
    small = ["--d", "16", "--L", "2", "--grid", "16", "--heads", "2", "--dce-heads", "2", "--K", "2",
             "--epochs", "2", "--batch-size", "32", "--seed", "5"]
    assert main(["generate-data", "--n", "400", "--seed", "8", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(root / "m.gzck")] + small) == 0
    assert main(["eval", "--checkpoint", str(root / "m.gzck"), "--data", str(data), "--H", "5", "--N", "5",
                 "--seed", "5", "--baselines", "--out", str(root / "report.csv")]) == 0
    return root


@pytest.mark.criterion(8)
def test_criterion_8_reproducibility(tmp_path, record_property):
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    names = ["data.gzsc", "data.train.txt", "data.val.txt", "data.test.txt"]
    data_same = all((a / n).read_bytes() == (b / n).read_bytes() for n in names)
    ckpt_same = (a / "m.gzck").read_bytes() == (b / "m.gzck").read_bytes()
    ra, rb = read_csv_rows(a / "report.csv"), read_csv_rows(b / "report.csv")
    worst = 0.0
    for x, y in zip(ra, rb):
        assert (x["method"], x["mode"], x["tag"], x["n"]) == (y["method"], y["mode"], y["tag"], y["n"])
        for m in ("mae3d", "mae2d", "mpjpe"):
            if not (math.isnan(x[m]) and math.isnan(y[m])):
                worst = max(worst, abs(x[m] - y[m]) / max(abs(x[m]), 1e-12))
    record_property("detail", f"dataset+manifests identical {data_same}, checkpoint identical {ckpt_same}, "
                              f"report rows {len(ra)} with max relative difference {worst:.1e}")
    assert data_same and len(ra) == len(rb) > 0 and worst <= 1e-9
