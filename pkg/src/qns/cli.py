"""Command-line entry points: ``run``, ``fit``, ``verify``, ``plot``.

Run configs are JSON files (runs have too many knobs for positional flags);
``-O key=value`` overrides individual fields.  Exit codes: 0 success,
1 verification failure, 2 usage/config error, 3 numeric divergence.
Environment: ``QNS_SEED`` overrides the config's seed list, ``QNS_THREADS``
caps the run worker pool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import fit_power_law
from .flow import (
    FlowParams,
    align_curves,
    effective_scales,
    theory_risk_curve,
    weight_risk_curve,
)
from .linalg import inv_sqrt_gram, rng_stream, sample_gaussian_mat
from .model import PowerLawSpectrum, TeacherModel
from .svgplot import line_chart
from .trainer import DivergenceError, SgdConfig, default_tracked_js, run_training, schedule_eta
from .trajectory import TrajectoryData, read_trajectory, write_trajectory
from .verify import SUITES, run_suite

KINDS = ("gf-closed", "gf-rk4", "gd-population", "sgd-stiefel", "sgd-euclidean")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated description of one experiment family (all seeds)."""

    kind: str
    d: int
    r: int
    r_s: int
    alpha: float
    seeds: list[int] = field(default_factory=lambda: [0])
    eta: float | None = None
    eta_c: float = 0.5
    c_alpha: float = 0.0
    steps: int = 1000
    horizon: float | None = None      # gf kinds: max raw time
    grid: str = "log"                 # gf kinds: t-grid spacing
    batch: int | None = None
    param: str = "plain"
    theta: str = "basis"
    record_every: int | str = "log"
    record_points: int = 200
    tracked_j: list[int] | str = "auto"
    out_dir: str = "runs"
    tag: str = ""

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        known = {f for f in RunConfig.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = RunConfig(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def fail(fieldname, msg):
            raise ConfigError(f"config field '{fieldname}': {msg}")

        if self.kind not in KINDS:
            fail("kind", f"must be one of {KINDS}")
        if self.d < 2:
            fail("d", "must be >= 2")
        if not 1 <= self.r <= self.d:
            fail("r", f"must satisfy 1 <= r <= d, got r={self.r}, d={self.d}")
        if self.r_s < 1:
            fail("r_s", "must be >= 1")
        if self.alpha < 0:
            fail("alpha", "must be >= 0")
        if self.alpha == 0.5:
            fail("alpha", "0.5 sits on the regime boundary and is excluded")
        if not self.seeds:
            fail("seeds", "need at least one seed")
        if self.eta is not None and self.eta <= 0:
            fail("eta", "must be positive")
        if self.steps < 1:
            fail("steps", "must be >= 1")
        if self.kind.startswith("gf") and (self.horizon is None or self.horizon <= 0):
            fail("horizon", "gf kinds need a positive time horizon")
        if self.grid not in ("log", "linear"):
            fail("grid", "must be 'log' or 'linear'")
        if self.batch is not None and self.batch < 1:
            fail("batch", "must be >= 1")
        if self.theta not in ("basis", "haar"):
            fail("theta", "must be 'basis' or 'haar'")
        if isinstance(self.tracked_j, list):
            bad = [j for j in self.tracked_j if not 1 <= j <= self.r]
            if bad:
                fail("tracked_j", f"indices outside 1..r: {bad}")
        elif self.tracked_j != "auto":
            fail("tracked_j", "must be a list of indices or 'auto'")

    def resolved_eta(self) -> float:
        if self.eta is not None:
            return self.eta
        return schedule_eta(self.d, self.r, self.r_s, self.alpha, self.eta_c, self.c_alpha)

    def resolved_batch(self) -> int:
        if self.batch is not None:
            return self.batch
        return self.d if self.kind in ("gd-population", "sgd-euclidean") else 1

    def resolved_tracked(self) -> list[int]:
        if self.tracked_j == "auto":
            sc = effective_scales(self.d, self.r_s, self.r, self.alpha)
            return list(default_tracked_js(self.r, min(sc.r_eff, self.r)))
        return list(self.tracked_j)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["eta_resolved"] = self.resolved_eta()
        d["batch_resolved"] = self.resolved_batch()
        d["tracked_resolved"] = self.resolved_tracked()
        return d


def _teacher(cfg: RunConfig, seed: int) -> TeacherModel:
    spectrum = PowerLawSpectrum(r=cfg.r, alpha=cfg.alpha)
    if cfg.theta == "basis":
        return TeacherModel(d=cfg.d, spectrum=spectrum)
    return TeacherModel.haar(cfg.d, spectrum, seed=seed)


def _time_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.grid == "log":
        return np.geomspace(cfg.horizon / cfg.steps, cfg.horizon, cfg.steps)
    return np.linspace(cfg.horizon / cfg.steps, cfg.horizon, cfg.steps)


def _run_gf_closed(cfg: RunConfig, seed: int) -> TrajectoryData:
    teacher = _teacher(cfg, seed)
    spectrum = teacher.spectrum
    params = FlowParams.from_spectrum(spectrum, cfg.d, cfg.r_s)
    sc = effective_scales(cfg.d, cfg.r_s, cfg.r, cfg.alpha)
    w0 = sample_gaussian_mat(cfg.d, cfg.r_s, 1.0 / cfg.d, rng_stream(seed, 1))
    if not teacher.theta_is_basis:
        # the closed forms are written in the teacher eigenbasis
        w0 = _to_basis(teacher, w0)
    ts = _time_grid(cfg)
    tracked = cfg.resolved_tracked()
    risk_n = weight_risk_curve(w0, ts, params)
    f0 = inv_sqrt_gram(w0)[: cfg.r]
    aligns = align_curves(f0 @ f0.T, ts, params)[:, [j - 1 for j in tracked]]
    return TrajectoryData(
        steps=np.arange(1, len(ts) + 1),
        time_raw=ts,
        time_rescaled=ts / (sc.kappa_eff * sc.t_eff),
        compute=ts * cfg.d * cfg.r_s,
        risk=risk_n / 8.0,
        risk_normalized=risk_n,
        alignments=aligns,
        tracked_js=tracked,
        meta={"kind": cfg.kind},
    )


def _to_basis(teacher: TeacherModel, w0: np.ndarray) -> np.ndarray:
    """Rotate a weight matrix into the teacher eigenbasis (columns of theta
    completed to an orthonormal basis)."""
    theta = teacher.theta
    d, r = theta.shape
    q, _ = np.linalg.qr(np.hstack([theta, np.eye(d)]))
    basis = q[:, :d]
    # ensure the first r columns span theta with positive orientation
    return basis.T @ w0


def _run_gf_rk4(cfg: RunConfig, seed: int) -> TrajectoryData:
    from .model import StudentState, population_risk, alignment_gram

    teacher = _teacher(cfg, seed)
    params = FlowParams.from_spectrum(teacher.spectrum, cfg.d, cfg.r_s)
    sc = effective_scales(cfg.d, cfg.r_s, cfg.r, cfg.alpha)
    w = sample_gaussian_mat(cfg.d, cfg.r_s, 1.0 / cfg.d, rng_stream(seed, 1))
    lam_e = np.zeros(cfg.d)
    lam_e[: cfg.r] = teacher.spectrum.lambdas
    frob = teacher.spectrum.frob

    def w_rhs(w_now):
        mw = teacher.theta @ (teacher.spectrum.lambdas[:, None] * (teacher.theta.T @ w_now))
        return (mw - (frob / np.sqrt(cfg.r_s)) * (w_now @ (w_now.T @ w_now))) / (
            2.0 * np.sqrt(cfg.r_s) * frob
        )

    ts = _time_grid(cfg)
    tracked = cfg.resolved_tracked()
    dt = min(0.01, 0.1 * params.t_u / float(params.lambdas[0]))
    rows_risk, rows_align = [], []
    t_now = 0.0
    for t_target in ts:
        n_sub = max(int(np.ceil((t_target - t_now) / dt)), 1)
        h = (t_target - t_now) / n_sub
        for _ in range(n_sub):
            k1 = w_rhs(w)
            k2 = w_rhs(w + 0.5 * h * k1)
            k3 = w_rhs(w + 0.5 * h * k2)
            k4 = w_rhs(w + h * k3)
            w = w + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t_now = t_target
        student = StudentState(w)
        rows_risk.append(population_risk(teacher, student, normalized=True))
        g = alignment_gram(teacher, student)
        rows_align.append([g[j - 1, j - 1] for j in tracked])
    risk_n = np.array(rows_risk)
    return TrajectoryData(
        steps=np.arange(1, len(ts) + 1),
        time_raw=ts,
        time_rescaled=ts / (sc.kappa_eff * sc.t_eff),
        compute=ts * cfg.d * cfg.r_s,
        risk=risk_n / 8.0,
        risk_normalized=risk_n,
        alignments=np.array(rows_align),
        tracked_js=tracked,
        meta={"kind": cfg.kind},
    )


def _run_discrete(cfg: RunConfig, seed: int) -> TrajectoryData:
    teacher = _teacher(cfg, seed)
    sc = effective_scales(cfg.d, cfg.r_s, cfg.r, cfg.alpha)
    eta = cfg.resolved_eta()
    mode = {
        "gd-population": "euclidean-population",
        "sgd-stiefel": "stiefel-online",
        "sgd-euclidean": "euclidean-online",
    }[cfg.kind]
    tracked = cfg.resolved_tracked()
    sgd_cfg = SgdConfig(
        eta=eta,
        steps=cfg.steps,
        batch=cfg.resolved_batch(),
        mode=mode,
        param=cfg.param,
        record_every=cfg.record_every,
        record_points=cfg.record_points,
        seed=seed,
        tracked_js=tuple(tracked),
    )
    result = run_training(teacher, sgd_cfg, r_s=cfg.r_s)
    recs = result.records
    time_raw = np.array([rec.step * eta for rec in recs])
    return TrajectoryData(
        steps=np.array([rec.step for rec in recs]),
        time_raw=time_raw,
        time_rescaled=time_raw / (sc.kappa_eff * sc.t_eff),
        compute=np.array([rec.compute for rec in recs]),
        risk=np.array([rec.risk for rec in recs]),
        risk_normalized=np.array([rec.risk_normalized for rec in recs]),
        alignments=np.array([rec.alignments for rec in recs]),
        tracked_js=tracked,
        meta={"kind": cfg.kind, "samples_used": result.samples_used},
    )


_RUNNERS = {
    "gf-closed": _run_gf_closed,
    "gf-rk4": _run_gf_rk4,
    "gd-population": _run_discrete,
    "sgd-stiefel": _run_discrete,
    "sgd-euclidean": _run_discrete,
}


def _out_path(cfg: RunConfig, seed: int) -> str:
    stem = cfg.tag or cfg.kind
    return os.path.join(cfg.out_dir, f"{stem}_seed{seed}.csv")


def cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for override in args.override or []:
        if "=" not in override:
            print(f"error: override {override!r} is not key=value", file=sys.stderr)
            return EXIT_USAGE
        key, value = override.split("=", 1)
        try:
            raw[key] = json.loads(value)
        except json.JSONDecodeError:
            raw[key] = value
    if os.environ.get("QNS_SEED"):
        raw["seeds"] = [int(os.environ["QNS_SEED"])]
    try:
        cfg = RunConfig.from_dict(raw)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    runner = _RUNNERS[cfg.kind]
    config_dict = cfg.to_dict()

    def work(seed: int) -> str:
        data = runner(cfg, seed)
        path = _out_path(cfg, seed)
        write_trajectory(path, data, config_dict, seed)
        return path

    workers = int(os.environ.get("QNS_THREADS", "0")) or min(4, len(cfg.seeds))
    try:
        if workers > 1 and len(cfg.seeds) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                paths = list(pool.map(work, cfg.seeds))
        else:
            paths = [work(seed) for seed in cfg.seeds]
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_fit(args) -> int:
    results = []
    for path in args.csv:
        try:
            data = read_trajectory(path)
        except OSError as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        mask = (data.compute > 0) & (data.risk_normalized > 0)
        try:
            if args.window:
                fit = fit_power_law(
                    data.compute[mask], data.risk_normalized[mask],
                    window=(args.window[0], args.window[1]),
                )
            else:
                fit = fit_power_law(data.compute[mask], data.risk_normalized[mask])
        except ValueError as exc:
            print(f"error: fit failed for {path}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        results.append(
            {
                "path": path,
                "exponent": fit.exponent,
                "intercept": fit.intercept,
                "r2": fit.r2,
                "window": list(fit.window),
                "n_points": fit.n_points,
            }
        )
    report = {
        "files": results,
        "median_exponent": float(np.median([r["exponent"] for r in results])),
    }
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    kwargs = {"seed": args.seed}
    if args.dim:
        kwargs["dim"] = args.dim
    if args.trials:
        kwargs["trials"] = args.trials
    if args.steps:
        kwargs["steps"] = args.steps
    if args.euler:
        kwargs["euler"] = True
    try:
        report = run_suite(args.suite, **kwargs)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_plot(args) -> int:
    series = []
    theory_added = False
    for path in args.csv:
        try:
            data = read_trajectory(path)
        except OSError as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        x = data.time_rescaled if args.x == "time" else data.compute
        series.append({"x": x, "y": data.risk_normalized, "label": os.path.basename(path)})
        if args.theory and not theory_added and data.meta.get("config"):
            c = data.meta["config"]
            spectrum = PowerLawSpectrum(r=c["r"], alpha=c["alpha"])
            sc = effective_scales(c["d"], c["r_s"], c["r"], c["alpha"])
            theo = np.array(
                [theory_risk_curve(t, sc, spectrum) for t in data.time_rescaled]
            )
            series.append({"x": x, "y": theo, "label": "theory", "dashed": True})
            theory_added = True
    warnings = line_chart(
        series,
        args.out,
        loglog=args.loglog,
        xlabel="rescaled time" if args.x == "time" else "compute",
        ylabel="normalized risk",
    )
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qns",
        description="Quadratic-network scaling-law simulator and verifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run config (one CSV per seed)")
    p_run.add_argument("config", help="JSON config path")
    p_run.add_argument("-O", "--override", action="append", metavar="KEY=VALUE",
                       help="override a config field (value parsed as JSON)")
    p_run.set_defaults(func=cmd_run)

    p_fit = sub.add_parser("fit", help="fit power-law exponents to trajectories")
    p_fit.add_argument("csv", nargs="+")
    group = p_fit.add_mutually_exclusive_group()
    group.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"),
                       help="explicit compute window")
    group.add_argument("--auto", action="store_true",
                       help="automatic window selection (the default)")
    p_fit.set_defaults(func=cmd_fit)

    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("suite", choices=sorted(SUITES))
    p_ver.add_argument("--dim", type=int, default=0)
    p_ver.add_argument("--trials", type=int, default=0)
    p_ver.add_argument("--steps", type=int, default=0)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--euler", action="store_true",
                       help="monotone suite: drive the plain Euler map instead, "
                            "exhibiting its order violation")
    p_ver.set_defaults(func=cmd_verify)

    p_plot = sub.add_parser("plot", help="render trajectories to SVG")
    p_plot.add_argument("csv", nargs="+")
    p_plot.add_argument("-o", "--out", required=True)
    p_plot.add_argument("--loglog", action="store_true")
    p_plot.add_argument("--theory", action="store_true",
                        help="overlay the staircase limit curve (dashed)")
    p_plot.add_argument("--x", choices=("compute", "time"), default="compute")
    p_plot.set_defaults(func=cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
