"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Protocol: epsilon 1e-3, 2e4 iterations, PDE collocation 2000 points (desk
scale on one core; all comparisons are trend-level).  Training results are
memoized under .cache_runs, so a cold run takes a few hours and warm reruns
are instant; run with ``pytest -s tests/test_acceptance.py`` to see the
criterion lines.
"""

import statistics

import numpy as np
import pytest

from conftest import DESK, SEEDS, cached_run

from spinnlab import autodiff as ad
from spinnlab import fdm
from spinnlab.models import Predictor
from spinnlab.networks import MlpConfig
from spinnlab.problems import PROBLEM_NAMES, get_problem, residual_of_exact
from spinnlab.training import RbaState, build_predictor, rba_update


def _line(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def _l2(problem, model, backbone, seed, **extra):
    return cached_run(problem=problem, model=model, backbone=backbone,
                      seed=seed, **DESK, **extra)


def _median(runs, key):
    return statistics.median(r[key] for r in runs)


def test_pinn_failure_vs_aspinn_success():
    """ex1 at eps=1e-3: plain network stuck above 5e-2, asymptotic form
    below 1e-2, each run within 30 CPU-minutes."""
    pinn = _l2("ex1", "pinn", "mlp", 0)
    aspinn = _l2("ex1", "aspinn", "mlp", 0)
    ok = (pinn["relative_l2"] > 5e-2 and aspinn["relative_l2"] < 1e-2
          and pinn["wall_seconds"] <= 1800 and aspinn["wall_seconds"] <= 1800)
    assert _line("pinn-fails-aspinn-succeeds", ok,
                 f"pinn {pinn['relative_l2']:.3e} (> 5e-2), "
                 f"aspinn {aspinn['relative_l2']:.3e} (< 1e-2), "
                 f"walls {pinn['wall_seconds']:.0f}s/{aspinn['wall_seconds']:.0f}s")


def test_aspinn_accuracy_at_least_gkpinn():
    """ex1 and ex2: median over three seeds, aspinn <= gkpinn."""
    details = []
    ok = True
    for problem in ("ex1", "ex2"):
        a = _median([_l2(problem, "aspinn", "mlp", s) for s in SEEDS], "relative_l2")
        g = _median([_l2(problem, "gkpinn", "mlp", s) for s in SEEDS], "relative_l2")
        ok = ok and a <= g
        details.append(f"{problem}: aspinn {a:.3e} vs gkpinn {g:.3e}")
    assert _line("aspinn-accuracy-vs-gkpinn", ok, "; ".join(details))


def test_aspinn_cost_below_gkpinn():
    """Identical iterations and backbone: aspinn wall <= 0.95 gkpinn wall."""
    details = []
    ok = True
    for problem in ("ex1", "ex2"):
        a = _median([_l2(problem, "aspinn", "mlp", s) for s in SEEDS], "wall_seconds")
        g = _median([_l2(problem, "gkpinn", "mlp", s) for s in SEEDS], "wall_seconds")
        ok = ok and a <= 0.95 * g
        details.append(f"{problem}: {a:.0f}s vs {g:.0f}s (ratio {a / g:.2f})")
    assert _line("aspinn-cost-vs-gkpinn", ok, "; ".join(details))


def test_chebyshev_kan_beats_mlp_on_ex1():
    """Median over three seeds: aspinn(kan) < aspinn(mlp)."""
    kan = _median([_l2("ex1", "aspinn", "kan", s) for s in SEEDS], "relative_l2")
    mlp = _median([_l2("ex1", "aspinn", "mlp", s) for s in SEEDS], "relative_l2")
    assert _line("kan-beats-mlp-ex1", kan < mlp,
                 f"kan {kan:.3e} vs mlp {mlp:.3e}")


@pytest.mark.xfail(strict=False,
                   reason="trend-level, stochastic at desk scale (non-blocking)")
def test_time_varying_mlp_at_most_kan():
    """ex5: the Chebyshev head loses to the MLP on the time-varying problem."""
    mlp = _l2("ex5", "aspinn", "mlp", 0, n_interior=2000)
    kan = _l2("ex5", "aspinn", "kan", 0, n_interior=2000)
    ok = mlp["relative_l2"] <= kan["relative_l2"]
    assert _line("ex5-mlp-at-most-kan", ok,
                 f"mlp {mlp['relative_l2']:.3e} vs kan {kan['relative_l2']:.3e}")


def test_boundary_exactness_all_problems(rng):
    """Layer-face prediction equals the trace to 1e-12 with random untrained
    parameters, 100 tangential points per problem."""
    worst = 0.0
    for name in PROBLEM_NAMES:
        prob = get_problem(name)
        pred = build_predictor(prob, "aspinn", "mlp")
        raw = [p.tensors() for p in pred.init(int(rng.integers(0, 1 << 16)))]
        prior = prob.priors[0]
        if prob.input_dim == 1:
            pts = np.array([[prior.position]] * 100)
            tang = np.zeros((100, 0))
            tang_col = np.zeros((100, 1))
        else:
            tang_col = rng.random((100, 1))
            pts = np.full((100, 2), prior.position)
            pts[:, 1 - prior.normal_dim] = tang_col[:, 0]
        want = np.broadcast_to(np.asarray(ad.value_of(prior.trace([tang_col])),
                                          dtype=float), (100, 1))
        dev = np.abs(np.asarray(pred.values(raw, pts)) - want).max()
        worst = max(worst, dev)
    assert _line("aspinn-boundary-exactness", worst < 1e-12,
                 f"worst face deviation {worst:.2e} over {len(PROBLEM_NAMES)} problems")


def test_autodiff_oracle_suite(rng):
    """Input derivatives < 1e-6 and parameter gradients < 1e-5 against
    central finite differences."""
    cfg = MlpConfig(1, (8, 8), activation="tanh")
    pred = Predictor("pinn", cfg)
    params = pred.init(12)
    params[0].vector *= 3.0
    raw = [p.tensors() for p in params]

    def f(x):
        return float(np.asarray(pred.values(raw, np.array([[x]]))).item())

    worst_in = 0.0
    for x0 in rng.uniform(0.1, 0.9, 25):
        fd1 = (f(x0 + 1e-4) - f(x0 - 1e-4)) / 2e-4
        fd2 = (f(x0 + 1e-4) - 2 * f(x0) + f(x0 - 1e-4)) / 1e-8
        if abs(fd1) < 0.2 or abs(fd2) < 0.2:
            continue
        b = ad.eval_with_input_derivatives(pred, [x0], raw)
        worst_in = max(worst_in, abs(b.du[0] - fd1) / abs(fd1),
                       abs(b.d2u[0] - fd2) / abs(fd2))

    # parameter gradients through a full residual + boundary loss
    from spinnlab.sampling import sample_problem
    from spinnlab.training import TrainConfig, _Batches, assemble_loss

    problem = get_problem("ex1", 0.05)
    predictor = Predictor("pinn", MlpConfig(1, (4,), activation="sigmoid"),
                          priors=problem.priors, epsilon=problem.epsilon)
    tcfg = TrainConfig("ex1", model="pinn", n_interior=16, seed=3)
    batches = _Batches(predictor, problem,
                       sample_problem(problem, 3, n_interior=16), tcfg)
    ps = predictor.init(3)
    rba = RbaState.ones(16)

    def loss_and_lifted():
        lifted = [p.lift() for p in ps]
        loss, _ = assemble_loss(predictor, lifted, batches, problem, tcfg, rba)
        return loss, lifted

    loss, lifted = loss_and_lifted()
    (grad,) = ad.param_gradient(loss, lifted)
    vec = ps[0].vector
    worst_par = 0.0
    for i in range(len(vec)):
        keep = vec[i]
        vec[i] = keep + 1e-5
        up = float(ad.value_of(loss_and_lifted()[0]))
        vec[i] = keep - 1e-5
        dn = float(ad.value_of(loss_and_lifted()[0]))
        vec[i] = keep
        fd = (up - dn) / 2e-5
        worst_par = max(worst_par, abs(grad[i] - fd) / max(1e-8, abs(fd)))
    ok = worst_in < 1e-6 and worst_par < 1e-5
    assert _line("autodiff-oracles", ok,
                 f"input-derivative {worst_in:.2e} (< 1e-6), "
                 f"parameter-gradient {worst_par:.2e} (< 1e-5)")


def test_exact_solution_residual_oracles(rng):
    """ex1/ex2/intro closed forms satisfy their equations to 1e-8 at eps 0.1."""
    worst = 0.0
    for name in ("ex1", "ex2", "intro"):
        prob = get_problem(name, 0.1)
        xs = rng.uniform(1e-6, 1 - 1e-6, 1000)
        worst = max(worst, np.abs(residual_of_exact(prob, xs)).max())
    assert _line("exact-residual-oracles", worst < 1e-8,
                 f"worst |residual| {worst:.2e} over 3 problems x 1000 points")


def test_fdm_convergence_suite():
    """ex1 max-norm error halves (>= 1.5x) per mesh doubling; the PDE
    solvers pass their self-convergence checks."""
    prob = get_problem("ex1", 1e-3)
    errs = []
    for n in (64, 128, 256, 512, 1024):
        sol = fdm.solve_steady_1d(prob, n)
        exact = np.asarray(ad.value_of(prob.exact([sol.axes[0]])))
        errs.append(np.abs(sol.values - exact).max())
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = all(e2 < e1 for e1, e2 in zip(errs, errs[1:])) and min(ratios) >= 1.5

    from scipy.interpolate import RegularGridInterpolator
    prob3 = get_problem("ex3", 1e-3)
    coarse = fdm.solve_steady_2d(prob3, 64)
    fine = fdm.solve_steady_2d(prob3, 128)
    interp = RegularGridInterpolator((fine.axes[0], fine.axes[1]), fine.values)
    pts, vals = coarse.points_and_values()
    elliptic = np.abs(interp(pts) - vals).max()
    ok = ok and elliptic < 5e-2

    prob5 = get_problem("ex5", 1e-3)
    a = fdm.solve_parabolic(prob5, 128, 128)
    b = fdm.solve_parabolic(prob5, 128, 256)
    c = fdm.solve_parabolic(prob5, 128, 512)
    d1 = np.abs(b.values[:, ::2] - a.values).max()
    d2 = np.abs(c.values[:, ::2] - b.values).max()
    ok = ok and d1 / d2 >= 1.5
    assert _line("fdm-convergence", ok,
                 f"ex1 ratios {['%.2f' % r for r in ratios]}, "
                 f"ex3 self-conv {elliptic:.3f} (< 5e-2), "
                 f"ex5 temporal ratio {d1 / d2:.2f} (>= 1.5)")


def test_rba_bound_property(rng):
    """1e6 random point-updates keep all multipliers in [0, 1]."""
    rba = RbaState(rng.random(100))
    ok = True
    for _ in range(10_000):
        res = rng.standard_normal(100) * rng.uniform(0.01, 100.0)
        rba = rba_update(rba, res, eta=rng.uniform(1e-5, 1.0))
        if rba.alpha.min() < 0.0 or rba.alpha.max() > 1.0:
            ok = False
            break
    assert _line("rba-bound", ok,
                 f"alpha stayed in [{rba.alpha.min():.3f}, {rba.alpha.max():.3f}] "
                 "over 1e6 updates")
