"""End-to-end acceptance checks at reference settings.

Each test drives the public API exactly the way a user would — build a
model, minimize the geometric action, post-process — and asserts one
headline property at its stated tolerance, so ``pytest -v`` prints one
pass/fail line per property.

The expensive minimizers are computed once per session in the ``zoo``
fixture and shared between tests.  Expected values are either derived by
hand (double-well barrier integrals, birth–death quadratures) or checked
against independently computed references frozen in this file.

Discrete saddle convention used throughout: on a finite grid the node of
minimal drift norm still carries the last uphill quantum of action, so
"beyond the saddle" always means indices *strictly after* the detected
dip node.
"""

from __future__ import annotations

import hashlib
import json
import time
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import quad

from minaction.cli import main as cli_main
from minaction.completion import complete_downhill
from minaction.descent import (
    DescentConfig,
    action_additive_closed_form,
    action_density,
    detect_saddle_index,
    minimize_action,
)
from minaction.hamiltonians import check_gradients
from minaction.inner import solve_inner
from minaction.models import (
    available_models,
    find_fixed_points,
    instantiate,
    sample_admissible,
)
from minaction.paths import broken_line_path, derivative_s, linear_path
from minaction.spde import make_etd_stepper
from minaction.string_method import string_relax


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def strict_downhill_ratio(model, path):
    """Peak action density strictly after the saddle node, relative to the
    global peak.  Zero means the second half of the path is a pure downhill
    relaxation, which costs nothing."""
    dphi = derivative_s(path)
    inner = solve_inner(model, np.asarray(path.states), dphi)
    dens = action_density(model, dphi, inner.theta)
    k = detect_saddle_index(model, path)
    beyond = float(dens[k + 1 :].max()) if k + 1 < len(dens) else 0.0
    return beyond / float(dens.max()), k


def max_distance_from_chord(states):
    """Largest perpendicular distance of any path node from the straight
    segment joining the endpoints."""
    states = np.asarray(states, dtype=float)
    chord = states[-1] - states[0]
    unit = chord / np.linalg.norm(chord)
    rel = states - states[0]
    perp = rel - np.outer(rel @ unit, unit)
    return float(np.linalg.norm(perp, axis=1).max())


def refined_endpoints(inst, start_name, end_name):
    """Fixed-point locations polished by the root finder (the catalog seeds
    are quoted to few digits; stiff fields need the exact roots)."""
    roots = {fp.name: fp.state for fp in find_fixed_points(inst)}
    return roots[start_name], roots[end_name]


def tree_digest(root):
    """Order-independent digest of every file below ``root``."""
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


# --------------------------------------------------------------------------
# session fixtures: one converged transition per catalog model
# --------------------------------------------------------------------------


def _run_case(
    name,
    start,
    end,
    n_points,
    config,
    *,
    params=None,
    refine=False,
    use_etd=False,
    complete=False,
    complete_n_points=None,
    init_states=None,
):
    inst = instantiate(name, **(params or {}))
    if refine:
        a, b = refined_endpoints(inst, start, end)
    else:
        a, b = inst.seeds[start], inst.seeds[end]
    path0 = init_states if init_states is not None else inst.initial_path(a, b, n_points)
    stepper = make_etd_stepper(inst.build_split) if use_etd else None
    result = minimize_action(inst.hamiltonian, path0, config, stepper=stepper)
    best_path = result.path
    if complete:
        comp = complete_downhill(
            inst.hamiltonian,
            result.path,
            jacobian=inst.fixed_point_jacobian,
            n_points=complete_n_points,
        )
        if comp.accepted:
            best_path = comp.path
    ratio, saddle_index = strict_downhill_ratio(inst.hamiltonian, best_path)
    return SimpleNamespace(
        inst=inst,
        result=result,
        path=best_path,
        ratio=ratio,
        saddle_index=saddle_index,
    )


@pytest.fixture(scope="session")
def zoo():
    """Reference minimizers for every catalog model at its quoted grid and
    step settings (with the documented initialization for the stiff cases)."""
    entries = {}
    entries["maier-stein"] = _run_case(
        "maier-stein", "minus", "plus", 1024,
        DescentConfig(step_size=0.1, max_iterations=20000, convergence_tol=1e-8),
        complete=True,
    )
    entries["acch-toy"] = _run_case(
        "acch-toy", "a", "b", 257,
        DescentConfig(step_size=0.01, max_iterations=42000, convergence_tol=1e-8,
                      adaptive_step=True),
    )
    entries["acch-pde"] = _run_case(
        "acch-pde", "a", "b", 100,
        DescentConfig(step_size=0.1, max_iterations=30000, convergence_tol=1e-3,
                      adaptive_step=True, max_displacement=0.1),
        refine=True, use_etd=True, complete=True,
    )
    entries["burgers-huxley"] = _run_case(
        "burgers-huxley", "minus", "plus", 100,
        DescentConfig(step_size=5e-3, max_iterations=12000, convergence_tol=1e-8,
                      adaptive_step=True),
        refine=True, use_etd=True, complete=True,
    )
    entries["charney-devore"] = _run_case(
        "charney-devore", "zonal", "blocked", 100,
        DescentConfig(step_size=1e-2, max_iterations=40000, convergence_tol=1e-7,
                      adaptive_step=True, max_displacement=0.1),
        complete=True, complete_n_points=400,
    )
    entries["egger"] = _run_case(
        "egger", "blocked", "zonal", 256,
        DescentConfig(step_size=1e-3, max_iterations=30000, convergence_tol=1e-8),
        complete=True,
    )
    entries["schloegl-rd"] = _run_case(
        "schloegl-rd", "low", "high", 512,
        DescentConfig(step_size=10.0, max_iterations=20000, convergence_tol=1e-8,
                      adaptive_step=True),
        complete=True,
    )
    slow = instantiate("slowfast2")
    entries["slowfast2"] = _run_case(
        "slowfast2", "high", "low", 256,
        DescentConfig(step_size=1e-2, max_iterations=30000, convergence_tol=1e-8,
                      adaptive_step=True, max_displacement=0.1),
        init_states=broken_line_path(
            [slow.seeds["high"], slow.seeds["saddle"], slow.seeds["low"]], 256),
    )
    entries["voter2d"] = _run_case(
        "voter2d", "minus", "plus", 256,
        DescentConfig(step_size=1e-3, max_iterations=40000, convergence_tol=1e-8),
    )
    return entries


@pytest.fixture(scope="session")
def bh_backward():
    """The reverse field transition, run with exactly the same budget as the
    forward one so the two raw minimizers are comparable."""
    return _run_case(
        "burgers-huxley", "plus", "minus", 100,
        DescentConfig(step_size=5e-3, max_iterations=12000, convergence_tol=1e-8,
                      adaptive_step=True),
        refine=True, use_etd=True,
    )


@pytest.fixture(scope="session")
def slowfast_forward():
    """The uphill-in-both-variables direction of the slow-fast model,
    initialized through the saddle seed."""
    inst = instantiate("slowfast2")
    init = broken_line_path(
        [inst.seeds["low"], inst.seeds["saddle"], inst.seeds["high"]], 256)
    return _run_case(
        "slowfast2", "low", "high", 256,
        DescentConfig(step_size=1e-2, max_iterations=18000, convergence_tol=1e-8,
                      adaptive_step=True, max_displacement=0.1),
        init_states=init,
    )


# --------------------------------------------------------------------------
# 1. gradient double well: half transition costs exactly the barrier
# --------------------------------------------------------------------------


def test_double_well_half_transition_action_matches_hand_derived_barrier():
    inst = instantiate("maier-stein", beta=1.0)
    start = time.monotonic()
    res = minimize_action(
        inst.hamiltonian,
        inst.initial_path(inst.seeds["minus"], inst.seeds["saddle"], 1024),
        DescentConfig(step_size=0.1, max_iterations=20000, convergence_tol=1e-8),
    )
    elapsed = time.monotonic() - start
    # For gradient drift -grad V the uphill action is 2*(V(saddle)-V(min));
    # V(x,y) = x^4/4 - x^2/2 + ... gives 2*(0 - (-1/4)) = 1/2 by hand.
    assert res.converged, "uphill run did not converge"
    assert abs(res.action - 0.5) <= 0.01 * 0.5, (
        f"action {res.action:.8f} differs from the hand-derived barrier 0.5 "
        f"by more than 1%")
    assert elapsed < 60.0, f"run took {elapsed:.1f}s, budget is 60s"


# --------------------------------------------------------------------------
# 2. single-compartment birth-death: action equals a log-rate quadrature
# --------------------------------------------------------------------------


def test_birth_death_uphill_action_matches_log_rate_quadrature():
    inst = instantiate("schloegl-rd", n_compartments=1)
    # In one compartment the exact uphill action is the integral of
    # log(death rate / birth rate) between the two roots; the rates below
    # restate the model's cubic birth-death balance.
    expected, quad_err = quad(
        lambda r: np.log((2.9 * r + r**3) / (0.8 + 3.1 * r**2)), 0.5, 1.0)
    assert quad_err < 1e-10
    start = time.monotonic()
    res = minimize_action(
        inst.hamiltonian,
        inst.initial_path(inst.seeds["low"], inst.seeds["saddle"], 512),
        DescentConfig(step_size=10.0, max_iterations=20000, convergence_tol=1e-8,
                      adaptive_step=True),
    )
    elapsed = time.monotonic() - start
    assert res.converged, "uphill run did not converge"
    rel = abs(res.action - expected) / abs(expected)
    assert rel <= 0.01, (
        f"action {res.action:.10f} vs quadrature {expected:.10f}: "
        f"relative error {rel:.2e} > 1%")
    assert elapsed < 60.0, f"run took {elapsed:.1f}s, budget is 60s"


# --------------------------------------------------------------------------
# 3. fixed-point finder reproduces known rest states
# --------------------------------------------------------------------------


def test_fixed_point_finder_reproduces_known_rest_states():
    # three-mode atmosphere: two stable regimes and the pass between them
    egger = instantiate("egger")
    roots = {fp.name: fp for fp in find_fixed_points(egger)}
    refs = {
        "blocked": (0.465, 1.65, 0.593),
        "zonal": (3.07, 0.392, 8.15),
        "saddle": (2.80, 1.35, 2.38),
    }
    for name, ref in refs.items():
        got = roots[name].state
        rel = np.abs(got - np.asarray(ref)) / np.abs(ref)
        assert rel.max() <= 5e-3, f"egger {name}: {got} vs {ref}"
    assert roots["blocked"].stability == "stable"
    assert roots["zonal"].stability == "stable"
    assert roots["saddle"].stability == "saddle"

    # single-compartment cubic balance: roots at 0.5, 1.0, 1.6 exactly
    sch = instantiate("schloegl-rd", n_compartments=1)
    values = sorted(float(fp.state[0]) for fp in find_fixed_points(sch))
    assert np.allclose(values, [0.5, 1.0, 1.6], atol=1e-10)

    # double well: endpoints and origin recovered to machine precision
    ms = instantiate("maier-stein")
    ms_roots = {fp.name: fp.state for fp in find_fixed_points(ms)}
    assert np.allclose(ms_roots["minus"], [-1.0, 0.0], atol=1e-12)
    assert np.allclose(ms_roots["plus"], [1.0, 0.0], atol=1e-12)
    assert np.allclose(ms_roots["saddle"], [0.0, 0.0], atol=1e-12)


# --------------------------------------------------------------------------
# 4. strong transverse drift bends the minimizer off the symmetry axis
# --------------------------------------------------------------------------


def test_strong_transverse_drift_bends_minimizer_off_the_axis(zoo):
    entry = zoo["maier-stein"]
    states = np.asarray(entry.result.path.states)
    assert np.abs(states[:, 1]).max() >= 0.1, (
        "minimizer stayed on the x-axis despite the transverse drift")

    # the straight x-axis connection is a flow line, hence a string-method
    # fixed point; its additive action must exceed the bent minimizer's
    inst = entry.inst
    axis = string_relax(
        linear_path(inst.seeds["minus"], inst.seeds["plus"], 1024),
        inst.drift, step_size=0.1, max_iterations=20000, tolerance=1e-10)
    axis_action = action_additive_closed_form(inst.hamiltonian, axis.path)
    assert entry.result.action < axis_action, (
        f"bent path action {entry.result.action:.8f} does not beat the "
        f"axis action {axis_action:.8f}")

    # with symmetric drift the bend disappears: minimizer == heteroclinic
    sym = instantiate("maier-stein", beta=1.0)
    res = minimize_action(
        sym.hamiltonian,
        sym.initial_path(sym.seeds["minus"], sym.seeds["plus"], 1024),
        DescentConfig(step_size=0.1, max_iterations=20000, convergence_tol=1e-8),
    )
    het = string_relax(
        linear_path(sym.seeds["minus"], sym.seeds["plus"], 1024),
        sym.drift, step_size=0.1, max_iterations=20000, tolerance=1e-10)
    sup = np.abs(np.asarray(res.path.states) - np.asarray(het.path.states)).max()
    assert sup <= 1e-3, f"symmetric-drift minimizer differs from flow line by {sup:.2e}"


# --------------------------------------------------------------------------
# 5. weak exchange: minimizer beats the heteroclinic, straightens as the
#    exchange rate grows
# --------------------------------------------------------------------------


def test_weak_exchange_minimizer_beats_heteroclinic_then_straightens(zoo):
    toy = zoo["acch-toy"]
    inst = toy.inst
    het = string_relax(
        linear_path(inst.seeds["a"], inst.seeds["b"], 1024),
        inst.drift, step_size=1e-4, max_iterations=4000, tolerance=1e-10)
    het_action = action_additive_closed_form(inst.hamiltonian, het.path)
    assert het_action >= 5.0 * toy.result.action, (
        f"heteroclinic action {het_action:.4f} is less than 5x the "
        f"minimizer action {toy.result.action:.4f}")

    bend = {}
    for alpha in (1.0, 1.2):
        strong = instantiate("acch-toy", alpha=alpha)
        res = minimize_action(
            strong.hamiltonian,
            strong.initial_path(strong.seeds["a"], strong.seeds["b"], 1024),
            DescentConfig(step_size=0.01, max_iterations=20000,
                          convergence_tol=1e-8, adaptive_step=True),
        )
        assert res.converged, f"alpha={alpha} sweep run did not converge"
        bend[alpha] = max_distance_from_chord(res.path.states)
    assert bend[1.2] <= 1e-3, (
        f"alpha=1.2 minimizer still bends {bend[1.2]:.2e} from the chord")
    assert bend[1.0] >= 0.05, (
        f"alpha=1.0 minimizer bends only {bend[1.0]:.2e} from the chord")


# --------------------------------------------------------------------------
# 6. flip-symmetric field: forward and backward transitions mirror
# --------------------------------------------------------------------------


def test_flip_symmetric_field_transitions_mirror_each_other(zoo, bh_backward):
    fwd = zoo["burgers-huxley"].result
    bwd = bh_backward.result
    rel = abs(fwd.action - bwd.action) / max(abs(fwd.action), abs(bwd.action))
    assert rel <= 1e-3, (
        f"forward action {fwd.action:.8f} vs backward {bwd.action:.8f}: "
        f"relative gap {rel:.2e}")

    F = np.asarray(fwd.path.states)
    B = np.asarray(bwd.path.states)
    # the field symmetry u(x) -> -u(-x) on the periodic grid
    idx = (-np.arange(F.shape[1])) % F.shape[1]
    sup = np.abs(B - (-F[:, idx])).max()
    assert sup <= 1e-3, f"backward path differs from mirrored forward by {sup:.2e}"


# --------------------------------------------------------------------------
# 7. past the saddle the action density vanishes, on every catalog model
# --------------------------------------------------------------------------


def test_action_density_vanishes_strictly_past_the_saddle_on_all_models(zoo):
    failures = []
    for name, entry in sorted(zoo.items()):
        if entry.ratio > 1e-4:
            failures.append(f"{name}: {entry.ratio:.3e}")
    assert not failures, (
        "peak density after the saddle exceeds 1e-4 of the global peak on: "
        + "; ".join(failures))


# --------------------------------------------------------------------------
# 8. internal consistency: residuals, gradients, monotone descent
# --------------------------------------------------------------------------


def test_converged_runs_satisfy_pointwise_stationarity_residuals(zoo):
    checked = 0
    for name, entry in sorted(zoo.items()):
        if not entry.result.converged:
            continue
        inner = entry.result.inner
        worst = max(np.abs(inner.residual_H).max(), np.abs(inner.residual_align).max())
        assert worst <= 1e-8, f"{name}: residual {worst:.2e} > 1e-8"
        checked += 1
    assert checked >= 5, "too few converged runs to make the check meaningful"


def test_analytic_derivatives_match_finite_differences_on_all_models():
    for name in available_models():
        inst = instantiate(name)
        phi, theta = sample_admissible(inst, 25, seed=7)
        report = check_gradients(inst.hamiltonian, phi, theta, tolerance=1e-5)
        assert report.passed, f"{name}: {report}"


def test_descent_only_lowers_the_action_at_catalog_settings():
    cases = {
        "maier-stein": dict(ends=("minus", "plus")),
        "acch-toy": dict(ends=("a", "b"), adaptive=True),
        "acch-pde": dict(ends=("a", "b"), adaptive=True, etd=True),
        "burgers-huxley": dict(ends=("minus", "plus"), adaptive=True, etd=True),
        "charney-devore": dict(ends=("zonal", "blocked")),
        "egger": dict(ends=("blocked", "zonal")),
        "schloegl-rd": dict(ends=("low", "high"), adaptive=True),
        "slowfast2": dict(ends=("low", "high"), adaptive=True,
                          max_displacement=0.1, through_saddle=True),
        "voter2d": dict(ends=("minus", "plus")),
    }
    warmup = 10
    for name, case in cases.items():
        inst = instantiate(name)
        n = inst.settings.n_points
        cfg = DescentConfig(
            step_size=inst.settings.step_size,
            max_iterations=300,
            convergence_tol=0.0,
            adaptive_step=case.get("adaptive", False),
            max_displacement=case.get("max_displacement", 0.05),
        )
        a, b = inst.seeds[case["ends"][0]], inst.seeds[case["ends"][1]]
        if case.get("through_saddle"):
            path0 = broken_line_path([a, inst.seeds["saddle"], b], n)
        else:
            path0 = inst.initial_path(a, b, n)
        stepper = make_etd_stepper(inst.build_split) if case.get("etd") else None
        res = minimize_action(inst.hamiltonian, path0, cfg, stepper=stepper)
        hist = np.asarray(res.action_history[warmup:])
        upticks = np.diff(hist) - 1e-6 * np.abs(hist[:-1])
        assert upticks.max() <= 0.0, (
            f"{name}: action rose by {upticks.max():.2e} beyond the "
            f"1e-6 relative slack after warm-up")


# --------------------------------------------------------------------------
# 9. the three relaxation schemes agree on shared minimizers
# --------------------------------------------------------------------------


def test_relaxation_schemes_agree_on_shared_minimizers():
    def polish(inst, reference, scheme, step, budget):
        cfg = DescentConfig(step_size=step, max_iterations=budget,
                            convergence_tol=1e-8, scheme=scheme)
        return minimize_action(inst.hamiltonian, reference.path, cfg)

    def spread_and_sup(runs):
        actions = [r.action for r in runs]
        spread = (max(actions) - min(actions)) / max(abs(a) for a in actions)
        sup = 0.0
        for i in range(len(runs)):
            for j in range(i + 1, len(runs)):
                a = np.asarray(runs[i].path.states)
                b = np.asarray(runs[j].path.states)
                sup = max(sup, float(np.abs(a - b).max()))
        return spread, sup

    ms = instantiate("maier-stein")
    semi = minimize_action(
        ms.hamiltonian, ms.initial_path(ms.seeds["minus"], ms.seeds["plus"], 256),
        DescentConfig(step_size=0.1, max_iterations=20000, convergence_tol=1e-8,
                      adaptive_step=True))
    assert semi.converged
    runs = [semi,
            polish(ms, semi, "explicit", 1e-4, 20000),
            polish(ms, semi, "original-gmam", 1e-4, 20000)]
    spread, sup = spread_and_sup(runs)
    assert spread <= 1e-4, f"double well: scheme action spread {spread:.2e}"
    assert sup <= 1e-3, f"double well: scheme path sup-distance {sup:.2e}"

    egger = instantiate("egger")
    semi = minimize_action(
        egger.hamiltonian,
        egger.initial_path(egger.seeds["blocked"], egger.seeds["zonal"], 1024),
        DescentConfig(step_size=1e-3, max_iterations=80000, convergence_tol=1e-8,
                      adaptive_step=True))
    assert semi.converged
    runs = [semi,
            polish(egger, semi, "explicit", 1e-5, 15000),
            polish(egger, semi, "original-gmam", 2e-6, 40000)]
    spread, sup = spread_and_sup(runs)
    assert spread <= 1e-4, f"three-mode atmosphere: scheme action spread {spread:.2e}"
    assert sup <= 1e-3, f"three-mode atmosphere: scheme path sup-distance {sup:.2e}"


# --------------------------------------------------------------------------
# 10. split-operator relaxation is exact per eigenmode; the stiff field
#     transition converges and visits the slow manifold before the saddle
# --------------------------------------------------------------------------


def test_split_relaxation_is_exact_per_eigenmode_and_field_run_lingers_before_saddle(zoo):
    entry = zoo["acch-pde"]
    split = entry.inst.build_split(0.1)
    worst = 0.0
    for k in range(split.eigenvectors.shape[1]):
        v = split.eigenvectors[:, k]
        exact = np.exp(-split.eigenvalues[k] ** 2 * 0.1) * v
        got = split.apply_decay(v[None, :])[0]
        worst = max(worst, float(np.abs(got - exact).max()))
    assert worst <= 1e-12, f"eigenmode decay error {worst:.2e}"

    assert entry.result.converged, "stiff field run did not converge"
    means = np.asarray(entry.path.states).mean(axis=1)
    peak = int(np.argmax(np.abs(means)))
    assert np.abs(means[peak]) > 0.2, (
        f"largest |spatial mean| along the path is {np.abs(means[peak]):.3f}")
    assert peak < entry.saddle_index, (
        f"mean-field excursion at node {peak} does not precede the saddle "
        f"at node {entry.saddle_index}")


# --------------------------------------------------------------------------
# 11. slow-fast model: momentum stays inside its admissible domain and both
#     transition directions brush the saddle
# --------------------------------------------------------------------------


def test_momentum_domain_guard_holds_on_both_slow_fast_transitions(zoo, slowfast_forward):
    backward = zoo["slowfast2"]
    assert backward.result.converged, "downhill-favored direction did not converge"
    for label, entry in (("forward", slowfast_forward), ("backward", backward)):
        # the Hamiltonian raises on any domain violation mid-run, so a
        # completed run is itself evidence; re-check the final iterate too
        states = np.asarray(entry.result.path.states)
        theta = np.asarray(entry.result.inner.theta)
        ok = entry.inst.hamiltonian.theta_domain(states, theta)
        assert np.all(ok), f"{label}: final momentum leaves the admissible domain"
        assert entry.result.action > 0.0, f"{label}: action is not positive"
        dist = np.linalg.norm(states - entry.inst.seeds["saddle"], axis=1).min()
        assert dist <= 2e-2, f"{label}: path misses the saddle by {dist:.3e}"


# --------------------------------------------------------------------------
# 12. identical run configurations give byte-identical outputs
# --------------------------------------------------------------------------


def test_identical_run_config_reproduces_byte_identical_outputs(tmp_path):
    out_dir = tmp_path / "out"
    config = {
        "model": "maier-stein",
        "params": {"beta": 10.0},
        "endpoints": ["minus", "plus"],
        "grid": {"n_s": 64},
        "solver": {"max_iterations": 400},
        "outputs": str(out_dir),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))

    assert cli_main(["run", "--config", str(cfg_path)]) == 0
    first = tree_digest(out_dir)
    n_files = len(list(out_dir.rglob("*")))
    assert n_files >= 4, "run produced fewer output files than documented"

    assert cli_main(["run", "--config", str(cfg_path)]) == 0
    second = tree_digest(out_dir)
    assert first == second, "re-running the same configuration changed the outputs"
