"""One test per acceptance criterion, each recording a PASS/FAIL line."""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from lapmo.harness import AblationConfig, run_ablation
from lapmo.laplacian import LaplacianVariant, build_graph, build_laplacian, diff_coords, motion_laplacian
from lapmo.losses import LossConfig, LossMode, combined_loss, laplacian_loss, motion_loss, position_loss
from lapmo.metrics import action_average, mpjacce, mpjpe_protocol1, mpjve
from lapmo.motion import MotionSequence, MotionSequence2D, Skeleton
from lapmo.tcn import ConvLayerSpec, NetworkSpec, NetworkState, backward, forward, forward_array

from helpers import ACCEPTANCE_LINES, central_diff, random_skeleton, rel_err
from reference_tables import MPJACCE_ROWS, MPJPE_ROWS, MPJVE_ROWS
from test_laplacian import neighbour_oracle

INSTANCES = 100
GRAD_TOL = 1e-4


class Criterion:
    """Collects named sub-checks and records one summary line."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.failures: list[str] = []
        self.notes: list[str] = []
        self.t0 = time.perf_counter()

    def check(self, ok: bool, what: str) -> None:
        (self.notes if ok else self.failures).append(what)

    def finish(self, summary: str | None = None) -> None:
        status = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.failures) if self.failures else (summary or "; ".join(self.notes))
        secs = time.perf_counter() - self.t0
        line = f"criterion {self.number} [{status}] {self.title} ({secs:.1f}s): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert not self.failures, line


def _grad_instance(rng):
    T, J = int(rng.integers(3, 9)), int(rng.integers(2, 5))
    sk = random_skeleton(rng, J)
    gt = rng.normal(0, 100, (T, J, 3))
    est = gt + rng.normal(0, 30, (T, J, 3))
    return sk, est, gt


def _tcn_instance(rng):
    J = int(rng.integers(1, 5))
    n_layers = int(rng.integers(1, 4))
    C = int(rng.integers(2, 6))
    widths = [2 * J] + [C] * (n_layers - 1) + [3 * J]
    layers = []
    for i in range(n_layers):
        layers.append(
            ConvLayerSpec(
                widths[i], widths[i + 1], int(rng.choice([1, 3, 5])), int(rng.integers(1, 4)),
                has_activation=i < n_layers - 1, residual=bool(0 < i < n_layers - 1 and rng.integers(0, 2)),
            )
        )
    spec = NetworkSpec(tuple(layers), unit=float(rng.choice([1.0, 100.0])))
    state = NetworkState.init(spec, int(rng.integers(0, 2**31)))
    T = int(rng.integers(1, 9))
    sk = random_skeleton(rng, J)
    x = rng.normal(0, 100, (1, 2 * J, T))
    gt = rng.normal(0, 100, (T, J, 3))
    return sk, state, x, gt


def test_criterion_1_gradient_correctness():
    c = Criterion(1, "gradient correctness")
    rng = np.random.default_rng(2024)
    worst = {}
    for _ in range(INSTANCES):
        sk, est, gt = _grad_instance(rng)
        T = est.shape[0]
        variant = list(LaplacianVariant)[int(rng.integers(0, 2))]
        L = motion_laplacian(sk, T, variant)
        cfg = LossConfig(alpha=float(rng.uniform(0.1, 2)), lam=float(rng.uniform(0.1, 2)), laplacian_variant=variant,
                         root_relative=bool(rng.integers(0, 2)))
        mode = list(LossMode)[int(rng.integers(0, 3))]
        fns = {
            "position_loss": lambda x: position_loss(x, gt),
            "laplacian_loss": lambda x: laplacian_loss(x, gt, L),
            "motion_loss": lambda x: motion_loss(x, gt),
            "combined_loss": lambda x: combined_loss(x, gt, cfg, mode, skeleton=sk),
        }
        for name, f in fns.items():
            fd = central_diff(lambda x: f(x).value, est.copy(), h=1e-5)
            worst[name] = max(worst.get(name, 0.0), rel_err(f(est).grad, fd))

    for _ in range(INSTANCES):
        sk, state, x, gt = _tcn_instance(rng)
        cfg = LossConfig(alpha=0.5)

        def loss_of(st, xx):
            y, _ = forward_array(st, xx)
            est = y[0].T.reshape(-1, gt.shape[1], 3)
            return combined_loss(est, gt, cfg, LossMode.P_PLUS_LAP, skeleton=sk)

        y, cache = forward_array(state, x)
        lv = loss_of(state, x)
        grads, gx = backward(state, cache, lv.grad.reshape(gt.shape[0], -1).T[None])
        for p, g in zip(state.params(), grads):
            fd = central_diff(lambda _: loss_of(state, x).value, p, h=1e-5)
            worst["tcn parameters"] = max(worst.get("tcn parameters", 0.0), rel_err(g, fd))
        fdx = central_diff(lambda xx: loss_of(state, xx).value, x.copy(), h=1e-5)
        worst["tcn input"] = max(worst.get("tcn input", 0.0), rel_err(gx, fdx))

    for name, err in worst.items():
        c.check(err <= GRAD_TOL, f"{name} max rel err {err:.2e}")
    c.check(time.perf_counter() - c.t0 < 120, "runtime under 2 min")
    c.finish(f"max rel err over {INSTANCES} instances each: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_2_laplacian_oracle():
    c = Criterion(2, "Laplacian oracle equivalence")
    rng = np.random.default_rng(7)
    worst, count = 0.0, 0
    while count < 200:
        J, T = int(rng.integers(1, 18)), int(rng.integers(1, 30))
        if T * J > 200:
            continue
        sk = random_skeleton(rng, J)
        P = rng.normal(0, 100, (T, J, 3))
        for v in LaplacianVariant:
            got = diff_coords(motion_laplacian(sk, T, v), P)
            worst = max(worst, float(np.max(np.abs(got - neighbour_oracle(sk, T, P, v)))))
        count += 1
    c.check(worst <= 1e-12, f"max abs diff vs dense oracle {worst:.1e} over {count} graphs x 2 variants")
    chain2 = Skeleton((None, 0))
    L = build_laplacian(build_graph(chain2, 2), LaplacianVariant.COMBINATORIAL)
    expected = np.array([[2, -1, -1, 0], [-1, 2, 0, -1], [-1, 0, 2, -1], [0, -1, -1, 2]], float)
    c.check(np.array_equal(L.toarray(), expected), "J=2/T=2 matrix exact")
    P = np.array([[[0, 0, 0], [1, 0, 0]], [[0, 0, 1], [1, 0, 1]]], float)
    D = diff_coords(L, P)
    c.check(np.array_equal(D, [[-1, 0, -1], [1, 0, -1], [-1, 0, 1], [1, 0, 1]]), "J=2/T=2 delta rows exact")
    c.finish()


def test_criterion_3_kernel_and_invariance():
    c = Criterion(3, "kernel/invariance suite")
    rng = np.random.default_rng(11)
    worst = dict.fromkeys(["L1", "lap_translate", "motion_translate", "mpjve_offset", "mpjacce_drift", "mpjpe_frames"], 0.0)
    for _ in range(INSTANCES):
        J, T = int(rng.integers(1, 10)), int(rng.integers(3, 12))
        sk = random_skeleton(rng, J)
        gt = rng.normal(0, 100, (T, J, 3))
        est = gt + rng.normal(0, 20, (T, J, 3))
        c3 = rng.normal(0, 1000, 3)
        for v in LaplacianVariant:
            L = motion_laplacian(sk, T, v)
            worst["L1"] = max(worst["L1"], float(np.max(np.abs(L @ np.ones(T * J)))))
            worst["lap_translate"] = max(
                worst["lap_translate"], abs(laplacian_loss(est + c3, gt, L).value - laplacian_loss(est, gt, L).value)
            )
        worst["motion_translate"] = max(
            worst["motion_translate"], abs(motion_loss(est + c3, gt).value - motion_loss(est, gt).value)
        )
        worst["mpjve_offset"] = max(worst["mpjve_offset"], abs(mpjve(est + c3, gt) - mpjve(est, gt)))
        drift = np.arange(T)[:, None, None] * rng.normal(0, 50, 3) + c3
        worst["mpjacce_drift"] = max(worst["mpjacce_drift"], abs(mpjacce(est + drift, gt) - mpjacce(est, gt)))
        frames = rng.normal(0, 1000, (T, 1, 3))
        worst["mpjpe_frames"] = max(
            worst["mpjpe_frames"], abs(mpjpe_protocol1(est + frames, gt) - mpjpe_protocol1(est, gt))
        )
    c.check(worst.pop("L1") <= 1e-12, "L.1 = 0 within 1e-12")
    for k, v in worst.items():
        c.check(v <= 1e-9, f"{k} {v:.1e}")
    c.finish("L.1 = 0; max deviations " + ", ".join(f"{k} {v:.0e}" for k, v in worst.items()))


def test_criterion_4_table_arithmetic():
    c = Criterion(4, "published table Avg arithmetic")
    for name, rows, key, printed in (
        ("MPJPE comparison", MPJPE_ROWS, "TCN + L_Lap", 100.62),
        ("MPJVE comparison", MPJVE_ROWS, "TCN + L_Lap", 3.01),
        ("MPJAccE comparison", MPJACCE_ROWS, "TCN + L_Lap", 1.33),
    ):
        vals = rows[key]
        assert vals[-1] == printed
        avg = action_average(vals[:15])
        c.check(abs(avg - printed) <= 0.01 + 1e-9, f"{name}: mean of 15 actions {avg:.3f} vs printed {printed}")
    c.finish()


@pytest.mark.slow
def test_criterion_5_directional_ablation(tmp_path):
    c = Criterion(5, "directional ablation on synthetic chain")
    cfg = AblationConfig(
        n_train=200, n_test=50, modes=(LossMode.P_ONLY, LossMode.P_PLUS_LAP), seeds=tuple(range(10)),
        output_dir=str(tmp_path / "ablation"),
    )
    res = run_ablation(cfg)
    c.check(res.all_finite, "all cells finite")
    for metric in ("mpjacce", "mpjve"):
        lap, base = res.median("plap", metric), res.median("p", metric)
        wins, total = res.paired_wins("plap", "p", metric)
        c.check(lap <= base, f"median {metric} plap {lap:.4f} vs p {base:.4f}")
        c.check(wins >= 7, f"{metric} plap <= p in {wins}/{total} paired seeds")
    elapsed = time.perf_counter() - c.t0
    c.check(elapsed < 30 * 60, f"runtime {elapsed:.0f}s")
    c.finish()


def test_criterion_6_length_contract():
    c = Criterion(6, "sequence-length contract")
    J = 5
    state = NetworkState.init(NetworkSpec.default(J), 0)
    rng = np.random.default_rng(0)
    for T in (1, 2, 7, 64, 301):
        out = forward(state, MotionSequence2D(Skeleton.chain(J), 50.0, rng.normal(0, 100, (T, J, 2))))
        c.check(out.positions.shape == (T, J, 3), f"T={T} -> {out.positions.shape[0]}")
    c.finish("T in {1, 2, 7, 64, 301} preserved")


def _lapmo(*args, cwd):
    return subprocess.run([sys.executable, "-m", "lapmo.cli", *args], cwd=cwd, capture_output=True, text=True)


def test_criterion_7_cli_determinism(tmp_path):
    c = Criterion(7, "CLI determinism")
    (tmp_path / "synth.json").write_text(json.dumps({"T": 24, "seed": 5}))
    (tmp_path / "abl.json").write_text(
        json.dumps({"corpus_dir": "corpus", "epochs": 2, "seeds": [0, 1], "output_dir": "out", "deterministic": True})
    )
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        for f in ("synth.json", "abl.json"):
            (d / f).write_text((tmp_path / f).read_text())
        steps = [
            ("synth", "--config", "synth.json", "--count", "30", "--out", "corpus"),
            ("ablate", "--config", "abl.json", "--quiet"),
            ("report", "--in", "out", "--out", "report.md"),
            ("report", "--in", "out", "--out", "report.csv"),
            ("eval", "--gt", "corpus", "--est", "corpus", "--out", "eval.md"),
        ]
        for s in steps:
            r = _lapmo(*s, cwd=d)
            c.check(r.returncode == 0, f"{run}: lapmo {s[0]} exit {r.returncode} {r.stderr.strip()[-200:]}")
        files = sorted(p for p in d.rglob("*") if p.is_file())
        outputs.append({str(p.relative_to(d)): p.read_bytes() for p in files})
    a, b = outputs
    c.check(set(a) == set(b), "same file set")
    differing = sorted(k for k in a if a[k] != b.get(k))
    c.check(not differing, f"outputs differ: {differing}")
    c.finish(f"two identical invocation sequences gave byte-identical outputs ({len(a)} files)")
