"""Experiment orchestration: configs, seeding, sweeps, persistence, CLI.

Configurations are strict JSON: unknown keys are rejected rather than
silently ignored, every field has a documented default, and a run is fully
reproducible from (seed, config digest).  Tabular results go to CSV with
shortest-round-trip float formatting (two runs with the same seed and config
produce byte-identical CSV bodies); nested metadata goes to a JSON sidecar.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, chaos, kernels, shesim, toynoise
from .errors import ConfigurationError, ShflabError
from .mollifier import Coupling, beta_eps, build_mollifier
from .testfunctions import GaussianBump, TestFunctionPair

EXPERIMENTS = (
    "jfun-table",
    "wpair",
    "second-moment-ladder",
    "sensitivity-curve",
    "chaos-vs-mc",
    "slab-scaling",
    "toy-suite",
)


@dataclass
class BumpConfig:
    center: list = field(default_factory=lambda: [0.0, 0.0])
    width: float = 1.0
    amplitude: float = 1.0

    def build(self) -> GaussianBump:
        return GaussianBump(center=tuple(self.center), width=self.width, amplitude=self.amplitude)


@dataclass
class PairConfig:
    g: BumpConfig = field(default_factory=BumpConfig)
    gprime: BumpConfig = field(default_factory=lambda: BumpConfig(center=[0.25, 0.0]))

    def build(self) -> TestFunctionPair:
        return TestFunctionPair(g=self.g.build(), gp=self.gprime.build())


@dataclass
class LatticeConfig:
    box_side: float = 12.0
    grid_n: int = 0  # 0: choose from the resolution policy
    steps: int = 0  # 0: choose from the resolution policy
    h_factor: float = 0.5
    dt_factor: float = 0.125
    enforce_resolution: bool = True

    def build(self, epsilon: float) -> shesim.Lattice:
        if self.grid_n and self.steps:
            return shesim.Lattice(box_side=self.box_side, n=self.grid_n, dt=1.0 / self.steps)
        auto = shesim.make_lattice(
            epsilon, box_side=self.box_side, h_factor=self.h_factor, dt_factor=self.dt_factor
        )
        n = self.grid_n or auto.n
        dt = 1.0 / self.steps if self.steps else auto.dt
        return shesim.Lattice(box_side=self.box_side, n=n, dt=dt)


@dataclass
class QuadConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 0.0
    max_subdivisions: int = 200
    simplex_samples: int = 100_000

    def build(self) -> kernels.QuadratureSpec:
        return kernels.QuadratureSpec(
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            max_subdivisions=self.max_subdivisions,
            simplex_samples=self.simplex_samples,
        )


@dataclass
class ExperimentConfig:
    experiment: str = "jfun-table"
    theta: float = 0.0
    eps_ladder: list = field(default_factory=lambda: [0.2, 0.1])
    tau_grid: list = field(default_factory=lambda: [0.0, 0.1, 0.3, 1.0])
    replicas: int = 64
    seed: int = 20250808
    chaos_order: int = 6
    slab_deltas: list = field(default_factory=lambda: [0.25, 0.125, 0.0625])
    t: float = 1.0
    mollifier_shape: str = "gaussian"
    mollifier_width: float = 0.5
    dtype: str = "float64"
    workers: int = 0  # 0: decide from the environment
    pair: PairConfig = field(default_factory=PairConfig)
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    quadrature: QuadConfig = field(default_factory=QuadConfig)

    def check(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}"
            )
        lad = list(self.eps_ladder)
        if any(not (0.0 < e < 1.0) for e in lad):
            raise ConfigurationError("eps_ladder entries must lie in (0, 1)")
        if any(a <= b for a, b in zip(lad, lad[1:])):
            raise ConfigurationError("eps_ladder must be strictly decreasing")
        taus = list(self.tau_grid)
        if any(t < 0 for t in taus) or any(a >= b for a, b in zip(taus, taus[1:])):
            raise ConfigurationError("tau_grid must be nonnegative and increasing")
        if self.replicas < 2:
            raise ConfigurationError("need at least 2 replicas")
        if self.chaos_order < 1 or self.chaos_order > 16:
            raise ConfigurationError("chaos_order must be in 1..16")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        ).hexdigest()[:16]


def _build_dataclass(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigurationError(f"expected an object at {path or 'top level'}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigurationError(f"unknown keys at {path or 'top level'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = {"pair": PairConfig, "lattice": LatticeConfig, "quadrature": QuadConfig,
               "g": BumpConfig, "gprime": BumpConfig}.get(name)
        if sub is not None:
            kwargs[name] = _build_dataclass(sub, value, f"{path}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def validate_config(raw: str) -> ExperimentConfig:
    """Parse, default, and range-check a JSON config; unknown keys are errors."""
    try:
        data = json.loads(raw) if raw.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config is not valid JSON: {e}") from e
    config = _build_dataclass(ExperimentConfig, data, "")
    config.check()
    return config


@dataclass
class ResultRecord:
    config_digest: str
    code_version: str
    wall_time_s: float
    ok: bool
    rows: list
    summary: dict


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(rows[0].keys())
        for row in rows:
            writer.writerow([_fmt(v) for v in row.values()])
    return buf.getvalue()


def write_outputs(record: ResultRecord, config: ExperimentConfig, out_dir: str):
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w") as f:
        f.write(rows_to_csv(record.rows))
    meta = {
        "config": dataclasses.asdict(config),
        "config_digest": record.config_digest,
        "code_version": record.code_version,
        "wall_time_s": record.wall_time_s,
        "ok": record.ok,
        "summary": record.summary,
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return csv_path


def _moll(config, epsilon):
    return build_mollifier(config.mollifier_shape, epsilon, width=config.mollifier_width)


def _coupling(config, moll):
    return Coupling(config.theta, moll.epsilon, beta_eps(config.theta, moll.epsilon, moll.c_Phi))


def _exp_jfun_table(config: ExperimentConfig):
    spec = config.quadrature.build()
    t_grid = sorted(set(np.logspace(-6, math.log10(2.0), 25).tolist()) | {0.5, 1.0})
    rows = []
    for t in t_grid:
        value, err = kernels.j_theta_with_error(config.theta, t, spec)
        rows.append({"theta": config.theta, "t": t, "j": value, "est_error": err})
    return rows, {"theta": config.theta}, True


def _exp_wpair(config: ExperimentConfig):
    spec = kernels.QuadratureSpec(
        rel_tol=max(config.quadrature.rel_tol, 1e-12),
        abs_tol=config.quadrature.abs_tol,
        max_subdivisions=config.quadrature.max_subdivisions,
        simplex_samples=config.quadrature.simplex_samples,
    )
    pair = config.pair.build()
    res = kernels.w_pairing(config.theta, config.t, pair, spec=spec)
    q2 = kernels.q2_pairing(config.theta, config.t, pair, spec=spec)
    rows = [
        {
            "theta": config.theta,
            "t": config.t,
            "value": res.value,
            "est_error": res.est_error,
            "method": res.method.value,
            "q2": q2,
        }
    ]
    return rows, {}, True


def _members_for(config, eps_list, taus=None):
    members = []
    for eps in eps_list:
        moll = _moll(config, eps)
        coup = _coupling(config, moll)
        if taus is None:
            members.append(shesim.EnsembleMember(coup, moll))
        else:
            for tau in taus:
                members.append(shesim.EnsembleMember(coup, moll, tau=tau or None))
    return members


def _exp_second_moment_ladder(config: ExperimentConfig):
    """Common-noise ladder: every epsilon driven by the same base arrays."""
    pair = config.pair.build()
    eps_list = list(config.eps_ladder)
    members = _members_for(config, eps_list)
    lattice = config.lattice.build(min(eps_list))
    bank = shesim.NoiseBank(config.seed, stream=0)
    F = shesim.run_ensemble(
        pair, members, lattice, bank, config.replicas,
        dtype=config.dtype, workers=config.workers or None,
        enforce_resolution=config.lattice.enforce_resolution,
    )
    q2_spec = kernels.DEFAULT_PAIRING_QUAD
    q2 = kernels.q2_pairing(config.theta, 1.0, pair, spec=q2_spec)
    mean = pair.heat_pairing(1.0)
    rows = []
    gaps = []
    for i, eps in enumerate(eps_list):
        f2 = (F[:, i] + mean) ** 2
        m2 = float(f2.mean())
        se = float(f2.std(ddof=1) / math.sqrt(len(f2)))
        gaps.append(abs(m2 - q2))
        rows.append(
            {"eps": eps, "replicas": config.replicas, "m2": m2, "se": se, "q2": q2, "gap": m2 - q2}
        )
    ok = all(a > b for a, b in zip(gaps, gaps[1:]))
    return rows, {"q2": q2, "gap_decreasing": ok}, ok


def _exp_sensitivity_curve(config: ExperimentConfig):
    """Coupled-resampling correlation over the tau grid, plus chaos prediction."""
    pair = config.pair.build()
    eps = config.eps_ladder[-1] if config.eps_ladder else 0.1
    taus = list(config.tau_grid)
    moll = _moll(config, eps)
    coup = _coupling(config, moll)
    members = [shesim.EnsembleMember(coup, moll)] + [
        shesim.EnsembleMember(coup, moll, tau=tau) for tau in taus
    ]
    lattice = config.lattice.build(eps)
    F = shesim.run_ensemble(
        pair, members, lattice,
        shesim.NoiseBank(config.seed, stream=0), config.replicas,
        bank_prime=shesim.NoiseBank(config.seed, stream=1),
        dtype=config.dtype, workers=config.workers or None,
        enforce_resolution=config.lattice.enforce_resolution,
    )
    co = chaos.chaos_coefficients(
        config.chaos_order, eps, coup.beta, pair,
        spec=config.quadrature.build(), mollifier=moll, seed=config.seed,
    )
    rows = []
    ok = True
    prev = float("inf")
    for j, tau in enumerate(taus):
        if tau == 0.0:
            corr, se = 1.0, 0.0  # coupled trajectories are bit-identical
            if not np.array_equal(F[:, 0], F[:, j + 1]):
                ok = False
        else:
            corr, se = shesim.estimate_correlation(np.stack([F[:, 0], F[:, j + 1]], axis=1))
        pred = chaos.correlation_from_chaos(co, tau, include_tail=True)
        ok = ok and corr <= prev + 1e-12
        prev = corr
        rows.append({"eps": eps, "tau": tau, "corr": corr, "se": se, "chaos_pred": pred,
                     "replicas": config.replicas})
    return rows, {"monotone": ok}, ok


def _exp_chaos_vs_mc(config: ExperimentConfig):
    pair = config.pair.build()
    eps = config.eps_ladder[-1] if config.eps_ladder else 0.1
    moll = _moll(config, eps)
    coup = _coupling(config, moll)
    spec = config.quadrature.build()
    co = chaos.chaos_coefficients(
        config.chaos_order, eps, coup.beta, pair, spec=spec, mollifier=moll, seed=config.seed
    )
    total = chaos.variance_from_chaos(co)
    tail, tail_err = chaos.tail_estimate(co)
    lattice = config.lattice.build(eps)
    F = shesim.run_ensemble(
        pair, [shesim.EnsembleMember(coup, moll)], lattice,
        shesim.NoiseBank(config.seed, stream=0), config.replicas,
        dtype=config.dtype, workers=config.workers or None,
        enforce_resolution=config.lattice.enforce_resolution,
    )[:, 0]
    var_mc, var_se = shesim.sample_variance(F)
    rows = [
        {"eps": eps, "theta": config.theta, "k": k + 1, "ck2": co.ck2[k],
         "est_error": co.est_errors[k]}
        for k in range(co.K)
    ]
    combined = math.hypot(var_se, tail_err)
    z = (var_mc - (total + tail)) / combined if combined > 0 else float("nan")
    summary = {
        "eps": eps, "beta": coup.beta, "chaos_sum": total, "tail": tail, "tail_err": tail_err,
        "var_mc": var_mc, "var_se": var_se, "z": z, "replicas": config.replicas,
    }
    return rows, summary, abs(z) <= 3.0


def _exp_slab_scaling(config: ExperimentConfig):
    pair = config.pair.build()
    eps = config.eps_ladder[-1] if config.eps_ladder else 0.05
    moll = _moll(config, eps)
    coup = _coupling(config, moll)
    spec = config.quadrature.build()
    rows = []
    prev = float("inf")
    ok = True
    for delta in config.slab_deltas:
        slab = chaos.SlabSpec(0.5 - delta / 2.0, 0.5 + delta / 2.0)
        value = chaos.slab_variance(
            slab, config.chaos_order, eps, coup.beta, pair,
            spec=spec, mollifier=moll, seed=config.seed,
        )
        ratio = value / delta
        ok = ok and ratio < prev
        prev = ratio
        rows.append({"delta": delta, "slab_variance": value, "ratio": ratio})
    return rows, {"ratio_decreasing": ok}, ok


def _exp_toy_suite(config: ExperimentConfig):
    noise = toynoise.DiscreteNoise(10, "sign")
    X = toynoise.ToyObservable.random(noise, seed=config.seed)
    spec = toynoise.walsh_spectrum(X, noise)
    singles = toynoise.CellPartition.singletons(noise.n)
    P = toynoise.project_blocks(X, singles, noise)
    checks = {
        "walsh_round_trip": float(
            np.abs(toynoise.spectrum_to_observable(spec, noise).table - X.table).max()
        ),
        "degree1_projection": float(np.abs(P.sign_flat() - spec.degree_part(1)).max()),
        "idempotent": float(
            np.abs(toynoise.project_blocks(P, singles, noise).table - P.table).max()
        ),
        "norm_identity": abs(
            toynoise.projection_norm_sq(X, singles, noise)
            - (P.variance() + P.expectation() ** 2)
        ),
    }
    scale = float(np.abs(X.table).max())
    rows = [{"check": k, "max_error": v, "pass": v < 1e-12 * max(1.0, scale)} for k, v in checks.items()]
    ok = all(r["pass"] for r in rows)
    return rows, {"n": noise.n}, ok


_DISPATCH = {
    "jfun-table": _exp_jfun_table,
    "wpair": _exp_wpair,
    "second-moment-ladder": _exp_second_moment_ladder,
    "sensitivity-curve": _exp_sensitivity_curve,
    "chaos-vs-mc": _exp_chaos_vs_mc,
    "slab-scaling": _exp_slab_scaling,
    "toy-suite": _exp_toy_suite,
}


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> ResultRecord:
    """Dispatch an experiment, optionally persisting CSV + JSON sidecar."""
    config.check()
    start = time.perf_counter()
    rows, summary, ok = _DISPATCH[config.experiment](config)
    record = ResultRecord(
        config_digest=config.digest(),
        code_version=__version__,
        wall_time_s=time.perf_counter() - start,
        ok=ok,
        rows=rows,
        summary=summary,
    )
    if out_dir is not None:
        write_outputs(record, config, out_dir)
    return record


# ---------------------------------------------------------------------------
# command line


def _parse_bump(text: str) -> BumpConfig:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise ConfigurationError("bump spec must be cx,cy,width,amplitude")
    return BumpConfig(center=parts[:2], width=parts[2], amplitude=parts[3])


def _emit(obj) -> int:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_kernels(args) -> int:
    spec = kernels.QuadratureSpec(rel_tol=args.rel_tol, simplex_samples=1)
    if args.kernels_cmd == "jfun":
        value, err = kernels.j_theta_with_error(args.theta, args.t, spec)
        return _emit(
            {"inputs": {"theta": args.theta, "t": args.t}, "value": value,
             "est_error": err, "method": "adaptive-quadrature"}
        )
    pair = TestFunctionPair(_parse_bump(args.g).build(), _parse_bump(args.gprime).build())
    res = kernels.w_pairing(
        args.theta, args.t, pair, spec=kernels.QuadratureSpec(rel_tol=args.rel_tol)
    )
    return _emit(
        {"inputs": {"theta": args.theta, "t": args.t, "g": args.g, "gprime": args.gprime},
         "value": res.value, "est_error": res.est_error, "method": res.method.value}
    )


def _cmd_simulate(args) -> int:
    config = ExperimentConfig(
        experiment="sensitivity-curve",
        theta=args.theta,
        eps_ladder=[args.eps],
        tau_grid=sorted(set(float(t) for t in args.tau_list.split(","))),
        replicas=args.replicas,
        seed=args.seed,
        dtype=args.dtype,
    )
    config.lattice.box_side = args.box_L
    if args.grid_n:
        config.lattice.grid_n = args.grid_n
    if args.steps:
        config.lattice.steps = args.steps
    config.lattice.enforce_resolution = not args.allow_coarse
    pair = config.pair.build()
    eps = args.eps
    moll = _moll(config, eps)
    coup = _coupling(config, moll)
    taus = list(config.tau_grid)
    members = [shesim.EnsembleMember(coup, moll)] + [
        shesim.EnsembleMember(coup, moll, tau=t) for t in taus
    ]
    lattice = config.lattice.build(eps)
    F = shesim.run_ensemble(
        pair, members, lattice,
        shesim.NoiseBank(config.seed, stream=0), config.replicas,
        bank_prime=shesim.NoiseBank(config.seed, stream=1),
        dtype=config.dtype, workers=config.workers or None,
        enforce_resolution=config.lattice.enforce_resolution,
    )
    rows = []
    for r in range(config.replicas):
        for j, tau in enumerate(taus):
            rows.append({"replica": r, "tau": tau, "F_xi": float(F[r, 0]),
                         "F_xitau": float(F[r, j + 1])})
    record = ResultRecord(config.digest(), __version__, 0.0, True, rows, {})
    import os

    out = args.out
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w") as f:
        f.write(rows_to_csv(rows))
    with open(out + ".meta.json", "w") as f:
        json.dump({"config": dataclasses.asdict(config), "config_digest": record.config_digest,
                   "code_version": __version__}, f, indent=2, sort_keys=True)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def _cmd_chaos(args) -> int:
    pair = TestFunctionPair(_parse_bump(args.g).build(), _parse_bump(args.gprime).build())
    moll = build_mollifier("gaussian", args.eps, width=args.mollifier_width)
    beta = beta_eps(args.theta, args.eps, moll.c_Phi)
    spec = kernels.QuadratureSpec(simplex_samples=args.samples)
    if args.chaos_cmd == "slab":
        slab = chaos.SlabSpec(args.s, args.t)
        value = chaos.slab_variance(slab, args.K, args.eps, beta, pair, spec=spec,
                                    mollifier=moll, seed=args.seed)
        out = {"inputs": {"eps": args.eps, "theta": args.theta, "K": args.K,
                          "s": args.s, "t": args.t},
               "slab_variance": value, "ratio": value / (args.t - args.s)}
    else:
        co = chaos.chaos_coefficients(args.K, args.eps, beta, pair, spec=spec,
                                      mollifier=moll, seed=args.seed)
        tail, tail_err = chaos.tail_estimate(co)
        out = {"inputs": {"eps": args.eps, "theta": args.theta, "K": args.K},
               "beta": beta, "ck2": co.ck2.tolist(), "est_errors": co.est_errors.tolist(),
               "sum": chaos.variance_from_chaos(co), "tail": tail, "tail_err": tail_err}
    if args.out:
        with open(args.out, "w") as f:
            json.dump(out, f, indent=2, sort_keys=True)
        print(f"wrote {args.out}")
        return 0
    return _emit(out)


def _parse_blocks(text: str):
    blocks = []
    for part in text.split(";"):
        blocks.append(tuple(int(i) for i in part.split(",") if i != ""))
    return toynoise.CellPartition(tuple(blocks))


def _toy_observable(args, noise):
    if args.fn == "random":
        return toynoise.ToyObservable.random(noise, seed=args.seed)
    if args.fn == "parity":
        return toynoise.ToyObservable.from_function(
            lambda *xs: np.prod(np.stack(xs), axis=0), noise
        )
    if args.fn == "majority":
        return toynoise.ToyObservable.from_function(
            lambda *xs: np.sign(np.sum(np.stack(xs), axis=0) + 0.5), noise
        )
    raise ConfigurationError(f"unknown toy function {args.fn!r}")


def _cmd_toy(args) -> int:
    noise = toynoise.DiscreteNoise(args.n, "sign")
    X = _toy_observable(args, noise)
    if args.toy_cmd == "project":
        partition = _parse_blocks(args.blocks) if args.blocks else toynoise.CellPartition.singletons(args.n)
        norm = toynoise.projection_norm_sq(X, partition, noise)
        spec = toynoise.walsh_spectrum(X, noise)
        return _emit(
            {"inputs": {"n": args.n, "fn": args.fn, "blocks": args.blocks},
             "projection_norm_sq": norm,
             "degree_mass": spec.degree_mass().tolist()}
        )
    res = toynoise.resample_correlation_discrete(
        X, args.rho, noise, mc_samples=args.mc_samples, seed=args.seed
    )
    out = {"inputs": {"n": args.n, "fn": args.fn, "rho": args.rho}, "exact": res.exact}
    if res.mc_estimate is not None:
        out.update({"mc_estimate": res.mc_estimate, "mc_se": res.mc_se})
    return _emit(out)


def _cmd_run(args) -> int:
    with open(args.config) as f:
        raw = f.read()
    config = validate_config(raw)
    record = run_experiment(config, out_dir=args.out)
    print(f"{config.experiment}: {'ok' if record.ok else 'FAILED'} "
          f"({len(record.rows)} rows, {record.wall_time_s:.1f}s, digest {record.config_digest})")
    return 0 if record.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shflab", description=__doc__, allow_abbrev=False)
    p.add_argument("--version", action="version", version=f"shflab {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    pk = sub.add_parser("kernels", help="kernel evaluations", allow_abbrev=False)
    ks = pk.add_subparsers(dest="kernels_cmd", required=True)
    kj = ks.add_parser("jfun", help="the reciprocal-gamma weight j", allow_abbrev=False)
    kj.add_argument("--theta", type=float, required=True)
    kj.add_argument("--t", type=float, required=True)
    kj.add_argument("--rel-tol", type=float, default=1e-8, dest="rel_tol")
    kw = ks.add_parser("wpair", help="two-particle kernel pairing", allow_abbrev=False)
    kw.add_argument("--theta", type=float, required=True)
    kw.add_argument("--t", type=float, default=1.0)
    kw.add_argument("--g", required=True, help="cx,cy,width,amplitude")
    kw.add_argument("--gprime", required=True, help="cx,cy,width,amplitude")
    kw.add_argument("--rel-tol", type=float, default=1e-4, dest="rel_tol")
    pk.set_defaults(func=_cmd_kernels)

    ps = sub.add_parser("simulate", help="coupled-resampling lattice runs", allow_abbrev=False)
    ps.add_argument("--eps", type=float, required=True)
    ps.add_argument("--theta", type=float, default=0.0)
    ps.add_argument("--tau-list", default="0.0,0.3", dest="tau_list")
    ps.add_argument("--replicas", type=int, default=64)
    ps.add_argument("--seed", type=int, default=20250808)
    ps.add_argument("--grid-n", type=int, default=0, dest="grid_n")
    ps.add_argument("--steps", type=int, default=0)
    ps.add_argument("--box-L", type=float, default=12.0, dest="box_L")
    ps.add_argument("--dtype", default="float64")
    ps.add_argument("--allow-coarse", action="store_true", dest="allow_coarse")
    ps.add_argument("--out", default="results.csv")
    ps.set_defaults(func=_cmd_simulate)

    pc = sub.add_parser("chaos", help="chaos coefficients and slab variances", allow_abbrev=False)
    pc.add_argument("--eps", type=float, required=True)
    pc.add_argument("--theta", type=float, default=0.0)
    pc.add_argument("--K", type=int, default=6)
    pc.add_argument("--g", default="0,0,1,1")
    pc.add_argument("--gprime", default="0.25,0,1,1")
    pc.add_argument("--mollifier-width", type=float, default=0.5, dest="mollifier_width")
    pc.add_argument("--num-samples", type=int, default=100_000, dest="samples")
    pc.add_argument("--rng-seed", type=int, default=0, dest="seed")
    pc.add_argument("--out", default="")
    pcs = pc.add_subparsers(dest="chaos_cmd")
    slab = pcs.add_parser("slab", help="slab-restricted variance", allow_abbrev=False)
    slab.add_argument("--s", type=float, required=True)
    slab.add_argument("--t", type=float, required=True)
    pc.set_defaults(func=_cmd_chaos, chaos_cmd=None)
    slab.set_defaults(func=_cmd_chaos, chaos_cmd="slab")

    pt = sub.add_parser("toy", help="discrete projector rig", allow_abbrev=False)
    ts = pt.add_subparsers(dest="toy_cmd", required=True)
    tp = ts.add_parser("project", allow_abbrev=False)
    tp.add_argument("--n", type=int, default=8)
    tp.add_argument("--blocks", default="")
    tp.add_argument("--fn", default="random", choices=("random", "parity", "majority"))
    tp.add_argument("--seed", type=int, default=0)
    tc = ts.add_parser("correlation", allow_abbrev=False)
    tc.add_argument("--n", type=int, default=8)
    tc.add_argument("--rho", type=float, required=True)
    tc.add_argument("--fn", default="random", choices=("random", "parity", "majority"))
    tc.add_argument("--mc-samples", type=int, default=0, dest="mc_samples")
    tc.add_argument("--seed", type=int, default=0)
    pt.set_defaults(func=_cmd_toy)

    pr = sub.add_parser("run", help="run a configured experiment", allow_abbrev=False)
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=_cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ShflabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
