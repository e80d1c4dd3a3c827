"""Command-line front end: JSON-configured experiment runs with CSV/JSON
outputs.

Exit codes: 0 success, 1 configuration or user error, 2 non-convergence,
3 numerical failure.  Identical config + seed produce byte-identical output
files; every output embeds the config hash and engine version.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ENGINE_VERSION
from . import classical, evolve, mlopt, models, observables, spectra
from .superop import vectorize

__all__ = ["main"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config plumbing


def _require_keys(cfg: dict, allowed: dict, where: str) -> None:
    """allowed: key -> required(bool).  Rejects unknown keys by name."""
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"unknown key {where}.{key}")
    for key, required in allowed.items():
        if required and key not in cfg:
            raise ConfigError(f"missing key {where}.{key}")


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for x in row:
            if isinstance(x, float):
                cells.append(f"{x:.12g}")
            else:
                cells.append(str(x))
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _stamp(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "engine_version": ENGINE_VERSION}


# ---------------------------------------------------------------------------
# model construction from config


_MODEL_PARAM_KEYS = {
    "fuks": {"p": False, "gamma": False},
    "dephasing": {"omega": False, "gamma": False},
    "mv-spread": {},
    "mv-consensus": {},
    "ml": {"weights": True},
    "fates": {"p": True},
}


def build_spec(model_cfg: dict, n_sites: int):
    """LindbladSpec for continuous model ids; raises ConfigError otherwise."""
    _require_keys(model_cfg, {"id": True, "params": False}, "model")
    mid = model_cfg["id"]
    params = model_cfg.get("params", {})
    if mid not in _MODEL_PARAM_KEYS:
        raise ConfigError(f"unknown model id {mid!r}")
    _require_keys(params, _MODEL_PARAM_KEYS[mid], "model.params")
    try:
        if mid == "fuks":
            return models.fuks_lindblad(
                models.FuksParams(params.get("p", 0.3),
                                  params.get("gamma", 1.0)), n_sites)
        if mid == "dephasing":
            return models.dephasing_lindblad(
                models.DephasingParams(params.get("omega", 0.0),
                                       params.get("gamma", 1.0)), n_sites)
        if mid == "mv-spread":
            return models.mv_lindblads(n_sites)[0]
        if mid == "mv-consensus":
            return models.mv_lindblads(n_sites)[1]
        if mid == "ml":
            w = params["weights"]
            if w == "published":
                return models.ml_lindblad(models.published_ml_weights(), n_sites)
            return models.ml_lindblad(models.MLWeights(tuple(w)), n_sites)
    except ValueError as err:
        raise ConfigError(f"model.params: {err}") from err
    raise ConfigError(f"model id {mid!r} has no continuous generator")


def build_step(model_cfg: dict, n_sites: int):
    mid = model_cfg["id"]
    params = model_cfg.get("params", {})
    try:
        if mid == "fuks":
            return models.fuks_step(
                models.FuksParams(params.get("p", 0.3)), n_sites)
        if mid == "mv-spread":
            return models.mv_spread_step(n_sites)
        if mid == "mv-consensus":
            return models.mv_consensus_step(n_sites)
        if mid == "fates":
            return models.fates_step(params["p"], n_sites)
    except ValueError as err:
        raise ConfigError(f"model.params: {err}") from err
    raise ConfigError(f"model id {mid!r} has no discrete step")


def build_initial(cfg: dict, n_sites: int):
    _require_keys(cfg, {"bits": False, "named": False, "file": False},
                  "initial")
    if sum(k in cfg for k in ("bits", "named", "file")) != 1:
        raise ConfigError("initial needs exactly one of bits/named/file")
    if "bits" in cfg:
        bits = classical.parse_bits(cfg["bits"])
        if len(bits) != n_sites:
            raise ConfigError(
                f"initial.bits has {len(bits)} sites, n_sites={n_sites}")
        dim = 2 ** n_sites
        rho = np.zeros((dim, dim), dtype=complex)
        idx = int(cfg["bits"], 2)
        rho[idx, idx] = 1.0
        return vectorize(rho)
    if "named" in cfg:
        if cfg["named"] != "ghz":
            raise ConfigError(f"unknown named state {cfg['named']!r}")
        dim = 2 ** n_sites
        psi = np.zeros(dim, dtype=complex)
        psi[0] = psi[-1] = 1 / np.sqrt(2)
        return vectorize(np.outer(psi, psi.conj()))
    rho = np.load(cfg["file"])
    return vectorize(np.asarray(rho, dtype=complex))


# ---------------------------------------------------------------------------
# subcommands


def cmd_evolve(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"model": True, "n_sites": True, "initial": True,
                        "evolution": True, "samples": False, "seed": False},
                  "config")
    n = int(cfg["n_sites"])
    state = build_initial(cfg["initial"], n)
    evo = cfg["evolution"]
    _require_keys(evo, {"kind": True, "t": False, "steps": False,
                        "tol": False, "horizon": False}, "evolution")
    samples = int(cfg.get("samples", evolve.DEFAULT_SAMPLES))
    method = args.method
    kind = evo["kind"]
    if kind == "continuous":
        spec = build_spec(cfg["model"], n)
        result = evolve.continuous_evolve(spec, state, float(evo["t"]),
                                          method=method, samples=samples)
    elif kind == "discrete":
        step = build_step(cfg["model"], n)
        result = evolve.discrete_run(step, state, int(evo["steps"]))
    elif kind == "converge":
        spec = build_spec(cfg["model"], n)
        result = evolve.converge_to_fixed_point(
            spec, state, tol=float(evo.get("tol", 1e-9)),
            horizon=float(evo.get("horizon", 1000.0)), method=method)
    else:
        raise ConfigError(f"unknown evolution.kind {kind!r}")

    rows = [(r[0], r[1], r[2], r[3], result.method_used)
            for r in result.trajectory]
    write_csv(out / "trajectory.csv",
              ["t", "n_over_N", "s_z", "trace", "method"], rows)
    final = result.final_state
    ab = observables.project_alpha_beta(final)
    summary = {
        **_stamp(cfg),
        "model": cfg["model"]["id"],
        "n_sites": n,
        "method": result.method_used,
        "time_reached": result.time_reached,
        "converged": result.converged,
        "final": {
            "n_over_N": observables.density_n(final) / n,
            "s_z": observables.expval_sz(final),
            "trace": observables.trace_of(final).real,
            "alpha": ab.alpha,
            "beta_abs": abs(ab.beta),
        },
    }
    write_json(out / "summary.json", summary)
    return 0 if (kind != "converge" or result.converged) else 2


_FAMILIES = {"fuks", "dephasing", "ml"}


def cmd_gap_scan(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"models": True, "mode": False, "seed": False},
                  "config")
    mode = cfg.get("mode", "dense")
    entries = cfg["models"]
    if not entries:
        raise ConfigError("models list is empty")
    all_rows = []
    fits = {}
    per_model_gaps = {}
    for entry in entries:
        _require_keys(entry, {"id": True, "params": False, "n_values": True,
                              "fit_exclude": False}, "models[]")
        if entry["id"] not in _FAMILIES:
            raise ConfigError(f"model {entry['id']!r} has no gap family")
        n_values = [int(x) for x in entry["n_values"]]
        if not n_values:
            raise ConfigError("models[].n_values is empty")
        family = lambda n, e=entry: build_spec(
            {"id": e["id"], "params": e.get("params", {})}, n)
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            reports = list(pool.map(
                lambda n: spectra.gap_scan(family, [n], mode=mode)[0],
                n_values))
        gaps = {}
        for n, rep, err in reports:
            if rep is None:
                all_rows.append((entry["id"], n, "nan", -1, f"error:{err}"))
            else:
                all_rows.append((entry["id"], n, rep.gap, rep.null_dim,
                                 rep.method))
                gaps[n] = rep.gap
        per_model_gaps[entry["id"]] = gaps
        # the bond-projector family's smallest two ring sizes sit off the
        # power law; they default to excluded from the fit (overridable)
        default_exclude = (4, 5) if entry["id"] == "dephasing" else ()
        exclude = tuple(entry.get("fit_exclude", default_exclude))
        try:
            fit = spectra.loglog_fit(sorted(gaps.items()), exclude=exclude)
            fits[entry["id"]] = {"c": fit.c, "d": fit.d,
                                 "stderr_c": fit.stderr_c,
                                 "stderr_d": fit.stderr_d,
                                 "n_points": fit.n_points}
        except ValueError as err:
            fits[entry["id"]] = {"error": str(err)}
    write_csv(out / "gaps.csv", ["model", "N", "gap", "null_dim", "method"],
              all_rows)
    write_json(out / "fits.json", {**_stamp(cfg), "fits": fits})
    if len(per_model_gaps) == 2:
        (name_a, ga), (name_b, gb) = per_model_gaps.items()
        shared = sorted(set(ga) & set(gb))
        ratio_rows = [(n, gb[n] / ga[n]) for n in shared if ga[n] > 0]
        write_csv(out / "ratios.csv", [f"N", f"{name_b}_over_{name_a}"],
                  ratio_rows)
    return 0


def cmd_mv_verify(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"n_values": True, "seed": False}, "config")
    n_values = [int(x) for x in cfg["n_values"]]
    rows = []
    all_ok = True
    for n in n_values:
        if n % 3 != 0:
            raise ConfigError(f"n_values entry {n} is not a multiple of 3 "
                              f"(pad the input first)")
        if n > 15:
            raise ConfigError(f"exhaustive verification capped at N=15, got {n}")
        budget = classical.tau_formula(n)
        worst = 0
        correct = 0
        for code in range(2 ** n):
            bits = [(code >> (n - 1 - i)) & 1 for i in range(n)]
            want = 1 if sum(bits) > n / 2 else 0
            label, used = classical.mv_classify(bits)
            worst = max(worst, used)
            correct += int(label == want)
        ok = correct == 2 ** n and worst <= budget
        all_ok &= ok
        rows.append((n, 2 ** n, correct, worst, budget, str(ok).lower()))
    write_csv(out / "verify.csv",
              ["N", "n_strings", "correct", "worst_sublayers", "budget", "ok"],
              rows)
    write_json(out / "summary.json", {**_stamp(cfg), "all_correct": all_ok})
    return 0 if all_ok else 3


def cmd_mv_run(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"scan": False, "n_sites": False, "initial": False,
                        "track": False, "sublayers": False, "t": False,
                        "phase": False, "seed": False, "n_traj": False},
                  "config")
    seed = int(cfg.get("seed", args.seed or 0))
    if "scan" in cfg:
        scan = cfg["scan"]
        _require_keys(scan, {"n_values": True, "n_traj": False,
                             "exact_cap": False}, "scan")
        n_traj = int(scan.get("n_traj", 400))
        cap = int(scan.get("exact_cap", 40_000))
        n_values = [int(x) for x in scan["n_values"]]
        seeds = np.random.SeedSequence(seed).spawn(len(n_values))
        def one(i):
            return evolve.mv_worst_case_times(
                n_values[i], n_traj=n_traj,
                rng=np.random.default_rng(seeds[i]), exact_cap=cap)
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(one, range(len(n_values))))
        rows = [(r["n_sites"], r["tau_spread"], r["tau_consensus"],
                 r["tau_total"], r["method_spread"], r["method_consensus"])
                for r in results]
        write_csv(out / "mv_tau.csv",
                  ["N", "tau_spread", "tau_consensus", "tau_total",
                   "method_spread", "method_consensus"], rows)
        ns = np.array([r["n_sites"] for r in results], dtype=float)
        tot = np.array([r["tau_total"] for r in results])
        if len(ns) >= 2:
            slope, intercept = np.polyfit(ns, tot, 1)
            fit = {"b": float(slope), "q": float(intercept)}
        else:
            fit = {"b": None, "q": None}
        write_json(out / "fit.json", {**_stamp(cfg), **fit,
                                      "n_points": len(ns)})
        return 0

    # single run on one input
    for key in ("n_sites", "initial", "track"):
        if key not in cfg:
            raise ConfigError(f"missing key config.{key}")
    n = int(cfg["n_sites"])
    bits = classical.parse_bits(cfg["initial"]["bits"])
    if cfg["track"] == "discrete":
        label, used = classical.mv_classify(bits)
        write_json(out / "summary.json", {
            **_stamp(cfg), "label": label, "sublayers_used": used,
            "budget": classical.tau_formula(n)})
        return 0
    if cfg["track"] != "continuous":
        raise ConfigError(f"unknown track {cfg['track']!r}")
    phase = cfg.get("phase", "consensus")
    spec = (models.mv_lindblads(n)[0] if phase == "spread"
            else models.mv_lindblads(n)[1])
    dyn = evolve.DiagonalDynamics(spec)
    t_max = float(cfg.get("t", 3.0 * n))
    t_grid = np.linspace(0.0, t_max, 400)
    occ, method = evolve._mean_occupancy(
        spec, bits, t_grid, int(cfg.get("n_traj", 400)),
        np.random.default_rng(seed), 40_000)
    dens = occ.sum(axis=1) / n
    rows = [(t_grid[i], dens[i], n / 2 - dens[i] * n, 1.0, method)
            for i in range(len(t_grid))]
    write_csv(out / "trajectory.csv",
              ["t", "n_over_N", "s_z", "trace", "method"], rows)
    tau = evolve.crossing_time(t_grid, dens, 0.99)
    write_json(out / "summary.json", {
        **_stamp(cfg), "method": method, "final_n_over_N": float(dens[-1]),
        "tau_cross_0.99": None if np.isnan(tau) else tau})
    return 0 if dens[-1] > 0.99 or phase == "spread" else 2


def cmd_classify(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"bits": True, "pad": False, "seed": False}, "config")
    bits = cfg["bits"]
    padded = models.mv_pad(bits) if cfg.get("pad", True) else bits
    if len(padded) % 3 != 0:
        raise ConfigError(f"bits length {len(padded)} is not a multiple of 3 "
                          f"and padding is disabled")
    label, used = classical.mv_classify(padded)
    write_json(out / "summary.json", {
        **_stamp(cfg), "input_bits": bits, "padded_bits": padded,
        "label": label, "sublayers_used": used,
        "budget": classical.tau_formula(len(padded))})
    return 0


def cmd_ml_cost(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"weights": True, "training_set": False,
                        "seed": False}, "config")
    weights = (models.published_ml_weights() if cfg["weights"] == "published"
               else models.MLWeights(tuple(cfg["weights"])))
    tset = _training_set_from(cfg.get("training_set"))
    scores = mlopt.per_state_scores(weights, tset)
    write_json(out / "summary.json", {
        **_stamp(cfg),
        "cost": float(sum(s.summand for s in scores)),
        "weights": list(weights.w),
        "per_state": [{
            "bits": "".join(map(str, s.bits)), "label": s.label,
            "f_zero": s.f_zero, "f_one": s.f_one, "summand": s.summand,
            "predicted": s.predicted, "misclassified": s.misclassified,
        } for s in scores],
    })
    return 0


def _training_set_from(raw):
    if raw is None:
        return None
    pairs = []
    for item in raw:
        _require_keys(item, {"bits": True, "label": True}, "training_set[]")
        pairs.append(mlopt.TrainingPair(
            tuple(int(c) for c in item["bits"]), int(item["label"])))
    return mlopt.TrainingSet(tuple(pairs))


def cmd_ml_opt(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"restarts": False, "seed": False, "start": False,
                        "training_set": False}, "config")
    seed = int(cfg.get("seed", args.seed or 0))
    start = (models.published_ml_weights()
             if cfg.get("start") == "published" else None)
    res = mlopt.optimize_weights(
        _training_set_from(cfg.get("training_set")),
        restarts=int(cfg.get("restarts", 8)),
        rng=np.random.default_rng(seed), start=start)
    trunc = mlopt.truncate_weights(res.weights)
    write_json(out / "summary.json", {
        **_stamp(cfg), "cost": res.cost,
        "weights": list(res.weights.w),
        "weights_3dp": list(trunc.w),
        "restarts_run": res.restarts_run,
        "evaluations": res.evaluations,
    })
    return 0


def cmd_fates_demo(cfg: dict, out: Path, args) -> int:
    _require_keys(cfg, {"bits": True, "p": False, "steps": False,
                        "n_seeds": False, "seed": False}, "config")
    bits = cfg["bits"]
    p = float(cfg.get("p", 0.5))
    steps = int(cfg.get("steps", 1000))
    n_seeds = int(cfg.get("n_seeds", 20))
    base = int(cfg.get("seed", args.seed or 0))
    seeds = np.random.SeedSequence(base).spawn(n_seeds)
    rows = []
    reached = 0
    n = len(bits)
    for i, s in enumerate(seeds):
        final = classical.fates_classical_trajectory(
            p, bits, steps, np.random.default_rng(s))
        dens = classical.popcount(final) / n
        reached += int(dens > 0.99)
        rows.append((i, classical.format_bits(final), dens))
    write_csv(out / "finals.csv", ["seed_index", "final_bits", "n_over_N"],
              rows)
    write_json(out / "summary.json", {
        **_stamp(cfg), "p": p, "steps": steps, "n_seeds": n_seeds,
        "runs_reaching_all_ones": reached,
        "max_final_density": max(r[2] for r in rows),
    })
    return 0


def cmd_selftest(cfg: dict, out: Path, args) -> int:
    """Fast invariant sweep; prints one line per check."""
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as err:
            checks.append((name, False, f"{type(err).__name__}: {err}"))

    rng = np.random.default_rng(int(cfg.get("seed", args.seed or 0)))

    def random_density(n):
        dim = 2 ** n
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        rho = g @ g.conj().T
        return rho / np.trace(rho)

    def c_round_trip():
        from .superop import devectorize
        for n in (1, 2, 3, 4):
            rho = random_density(n)
            assert np.array_equal(devectorize(vectorize(rho)), rho)

    def c_channel_traces():
        from .observables import trace_of
        from .superop import VecState
        for step in (models.fuks_step(models.FuksParams(0.3), 3),
                     models.mv_spread_step(3), models.mv_consensus_step(3),
                     models.fates_step(0.4, 3)):
            for _ in range(10):
                v = vectorize(random_density(3))
                out = VecState(3, step.matrix @ v.amplitudes)
                assert abs(trace_of(out) - 1) < 1e-10

    def c_generator_trace_annihilation():
        from .superop import assemble_lindbladian, devectorize
        for spec in (models.fuks_lindblad(models.FuksParams(0.3), 3),
                     models.dephasing_lindblad(models.DephasingParams(), 3)):
            gen = assemble_lindbladian(spec)
            for _ in range(10):
                out = devectorize(gen @ vectorize(random_density(3)))
                assert abs(np.trace(out)) < 1e-10

    def c_kernel_dims():
        assert spectra.spectrum(
            models.fuks_lindblad(models.FuksParams(0.3), 3)).null_dim == 4
        assert spectra.spectrum(
            models.dephasing_lindblad(models.DephasingParams(), 3)).null_dim == 4

    def c_mv_budget():
        for n in (6,):
            for code in range(2 ** n):
                bits = [(code >> (n - 1 - i)) & 1 for i in range(n)]
                want = 1 if sum(bits) > n / 2 else 0
                label, used = classical.mv_classify(bits)
                assert label == want and used <= classical.tau_formula(n)

    def c_diagonal_oracle():
        from .observables import diag_indices
        from .superop import assemble_lindbladian
        spec = models.fuks_lindblad(models.FuksParams(0.3), 3)
        idx = diag_indices(3)
        got = evolve.diagonal_rate_matrix(spec).toarray()
        want = assemble_lindbladian(spec).dense()[np.ix_(idx, idx)].real
        assert np.abs(got - want).max() < 1e-12

    check("vectorization round trip", c_round_trip)
    check("discrete steps preserve trace", c_channel_traces)
    check("generators annihilate trace", c_generator_trace_annihilation)
    check("kernel dimensions", c_kernel_dims)
    check("majority voting budget (N=6 exhaustive)", c_mv_budget)
    check("diagonal restriction matches generator", c_diagonal_oracle)

    for name, ok, msg in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + msg if msg else ''}")
    all_ok = all(ok for _, ok, _ in checks)
    write_json(out / "selftest.json", {
        **_stamp(cfg),
        "checks": [{"name": n, "ok": ok, "error": msg}
                   for n, ok, msg in checks],
        "all_ok": all_ok,
    })
    return 0 if all_ok else 3


COMMANDS = {
    "evolve": cmd_evolve,
    "gap-scan": cmd_gap_scan,
    "mv-verify": cmd_mv_verify,
    "mv-run": cmd_mv_run,
    "classify": cmd_classify,
    "ml-cost": cmd_ml_cost,
    "ml-opt": cmd_ml_opt,
    "fates-demo": cmd_fates_demo,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qcadc",
        description="Non-unitary quantum cellular automata on rings: "
                    "density classification and majority voting.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON configuration file")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--method", default="auto",
                        choices=["auto", "dense", "krylov", "diagonal"])
    args = parser.parse_args(argv)

    cfg = {}
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text())
        except FileNotFoundError:
            print(f"error: config file not found: {args.config}",
                  file=sys.stderr)
            return 1
        except json.JSONDecodeError as err:
            print(f"error: config is not valid JSON: {err}", file=sys.stderr)
            return 1
    if args.seed is not None:
        cfg.setdefault("seed", args.seed)

    try:
        return COMMANDS[args.command](cfg, args.out, args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (evolve.KrylovError, FloatingPointError, MemoryError,
            spectra.SpectrumError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
