"""Command-line harness: run experiment grids, plot curves, self-verify.

Subcommands:

* ``run <config.json>`` executes every (arm, horizon) cell of the config's
  experiment grid and writes one CSV row per trial.
* ``plot <csv> <svg>`` renders mean relative regret (plus or minus one
  standard deviation) against the horizon, one polyline per arm; instances
  whose runs report positive infeasibility get a second panel for it.
* ``verify`` runs the fast self-check suite and exits nonzero on failure.

Config schema (JSON object; defaults in parentheses):

    instance    {"family": "knapsack"|"grid_path", ...factory overrides}
    arms        list of {"predictor": ..., "loss": ...}; loss only for
                model predictors ("linear"/"mlp"); one arm minimum
    T           list of horizons ([1000])
    n_trials    trials per cell (40)
    mode        "hard"|"soft" (instance default)
    schedule    {"period": int} or {"beta": float} ({"period": 10})
    zeta        budget penalty (null: calibrated)
    train_steps Adam steps per refit (50)
    learning_rate  override (null: per model class)
    seed        master seed (0)
    workers     parallel trial workers (null: all cores, OCDM_WORKERS wins)
    out         CSV path ("results.csv")

All floats in the CSV carry 9 significant digits with a dot decimal
separator; identical configs reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError
from .datagen import make_instance
from .losses import LossKind
from .simulate import (
    EpisodeConfig,
    PeriodicSchedule,
    PowerSchedule,
    default_workers,
    run_trials,
)

CSV_HEADER = ("instance,arm,loss,predictor,T,trial,seed,tau,obj,obj_hindsight,"
              "rel_regret,infeasibility,dv_measured,wall_ms")


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".9g")


@dataclass
class Arm:
    predictor: str
    loss: LossKind | None

    @property
    def label(self) -> str:
        if self.loss is None:
            return self.predictor
        return f"{self.loss.value}+{self.predictor}"


@dataclass
class RunConfig:
    instance_family: str
    instance_overrides: dict
    arms: list[Arm]
    horizons: list[int]
    n_trials: int
    mode: str | None
    schedule: PeriodicSchedule | PowerSchedule
    zeta: float | None
    train_steps: int
    learning_rate: float | None
    seed: int
    workers: int | None
    out: str


def parse_run_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a JSON object")
    inst = dict(data.get("instance", {"family": "knapsack"}))
    family = inst.pop("family", None)
    if family is None:
        raise ConfigurationError("instance.family is required")
    arms_raw = data.get("arms")
    if not arms_raw:
        raise ConfigurationError("at least one arm is required")
    arms = []
    for spec in arms_raw:
        predictor = spec.get("predictor")
        if predictor is None:
            raise ConfigurationError(f"arm missing predictor: {spec}")
        loss = None
        if predictor in ("linear", "mlp"):
            loss = LossKind(spec.get("loss", "spo_plus"))
        elif "loss" in spec:
            raise ConfigurationError(f"benchmark arm {predictor!r} takes no loss")
        arms.append(Arm(predictor=predictor, loss=loss))
    sched_raw = data.get("schedule", {"period": 10})
    if "period" in sched_raw:
        schedule = PeriodicSchedule(int(sched_raw["period"]))
    elif "beta" in sched_raw:
        schedule = PowerSchedule(float(sched_raw["beta"]))
    else:
        raise ConfigurationError("schedule needs 'period' or 'beta'")
    horizons = [int(t) for t in data.get("T", [1000])]
    if not horizons:
        raise ConfigurationError("T must list at least one horizon")
    return RunConfig(
        instance_family=family,
        instance_overrides=inst,
        arms=arms,
        horizons=horizons,
        n_trials=int(data.get("n_trials", 40)),
        mode=data.get("mode"),
        schedule=schedule,
        zeta=data.get("zeta"),
        train_steps=int(data.get("train_steps", 50)),
        learning_rate=data.get("learning_rate"),
        seed=int(data.get("seed", 0)),
        workers=data.get("workers"),
        out=str(data.get("out", "results.csv")),
    )


def cmd_run(config_path: str, seed: int | None = None, workers: int | None = None,
            out: str | None = None) -> int:
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return 2
    try:
        cfg = parse_run_config(raw)
        if seed is not None:
            cfg.seed = seed
        if workers is not None:
            cfg.workers = workers
        if out is not None:
            cfg.out = out
        rows = run_grid(cfg)
    except (ConfigurationError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    with open(cfg.out, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {len(rows)} rows to {cfg.out}")
    return 0


def run_grid(cfg: RunConfig) -> list[str]:
    instance = make_instance(cfg.instance_family, seed=cfg.seed,
                             **cfg.instance_overrides)
    mode = cfg.mode or instance.default_mode()
    workers = cfg.workers if cfg.workers is not None else default_workers()
    rows: list[str] = []
    for arm in cfg.arms:
        for T in cfg.horizons:
            episode = EpisodeConfig(
                horizon=T,
                mode=mode,
                zeta=cfg.zeta,
                schedule=cfg.schedule,
                loss=arm.loss or LossKind.SPO_PLUS,
                predictor=arm.predictor,
                train_steps=cfg.train_steps,
                learning_rate=cfg.learning_rate,
                seed=cfg.seed,
            )
            metrics, _ = run_trials(episode, instance, cfg.n_trials, workers=workers)
            for m in metrics:
                if m.rel_regret is None:
                    print(
                        f"warning: undefined rel_regret for arm={arm.label} "
                        f"T={T} trial={m.trial} (hindsight objective <= 0)",
                        file=sys.stderr,
                    )
                rows.append(",".join([
                    instance.family,
                    arm.label,
                    arm.loss.value if arm.loss is not None else "",
                    arm.predictor,
                    str(T),
                    str(m.trial),
                    str(cfg.seed),
                    str(m.tau),
                    _fmt(m.obj),
                    _fmt(m.obj_hindsight),
                    _fmt(m.rel_regret),
                    _fmt(m.infeasibility),
                    _fmt(m.dv_measured),
                    _fmt(m.wall_ms),
                ]))
    return rows


# ---------------------------------------------------------------------------
# plotting


def _read_csv(path: str) -> list[dict]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            rows.append(dict(zip(header, line.split(","))))
    return rows


def _series(rows: list[dict], value_key: str) -> dict[str, list[tuple[int, float, float]]]:
    """Per-arm (T, mean, std) triples, T ascending; undefined values skipped."""
    arms: dict[str, dict[int, list[float]]] = {}
    for row in rows:
        val = row[value_key]
        if val == "":
            continue
        arms.setdefault(row["arm"], {}).setdefault(int(row["T"]), []).append(float(val))
    out = {}
    for arm, by_t in arms.items():
        pts = []
        for T in sorted(by_t):
            vals = np.array(by_t[T])
            std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            pts.append((T, float(vals.mean()), std))
        out[arm] = pts
    return out


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#17becf", "#7f7f7f"]


def _panel_svg(series: dict, ylabel: str, x0: float, y0: float,
               width: float, height: float) -> list[str]:
    pad_l, pad_r, pad_t, pad_b = 64.0, 150.0, 20.0, 44.0
    plot_w = width - pad_l - pad_r
    plot_h = height - pad_t - pad_b
    ts = sorted({t for pts in series.values() for (t, _, _) in pts})
    if not ts:
        raise ConfigurationError(f"no data to plot for panel {ylabel!r}")
    t_min, t_max = min(ts), max(ts)
    t_span = (t_max - t_min) or 1.0
    hi = max(mean + std for pts in series.values() for (_, mean, std) in pts)
    lo = min(0.0, min(mean - std for pts in series.values() for (_, mean, std) in pts))
    hi = hi if hi > lo else lo + 1.0
    y_span = (hi - lo) * 1.05 or 1.0

    def sx(t):
        return x0 + pad_l + (t - t_min) / t_span * plot_w

    def sy(v):
        return y0 + pad_t + (1.0 - (v - lo) / y_span) * plot_h

    parts = [
        f'<line class="axis" x1="{sx(t_min):.2f}" y1="{sy(lo):.2f}" '
        f'x2="{sx(t_max):.2f}" y2="{sy(lo):.2f}" stroke="black"/>',
        f'<line class="axis" x1="{sx(t_min):.2f}" y1="{sy(lo):.2f}" '
        f'x2="{sx(t_min):.2f}" y2="{y0 + pad_t:.2f}" stroke="black"/>',
        f'<text class="xlabel" x="{x0 + pad_l + plot_w / 2:.2f}" '
        f'y="{y0 + height - 8:.2f}" text-anchor="middle">T</text>',
        f'<text class="ylabel" x="{x0 + 14:.2f}" y="{y0 + pad_t + plot_h / 2:.2f}" '
        f'text-anchor="middle" transform="rotate(-90 {x0 + 14:.2f} '
        f'{y0 + pad_t + plot_h / 2:.2f})">{ylabel}</text>',
    ]
    for t in ts:
        parts.append(
            f'<text class="xtick" x="{sx(t):.2f}" y="{sy(lo) + 16:.2f}" '
            f'text-anchor="middle" font-size="10">{t}</text>'
        )
    for idx, val in enumerate((lo, hi)):
        parts.append(
            f'<text class="ytick" x="{x0 + pad_l - 6:.2f}" '
            f'y="{sy(val) + 4:.2f}" text-anchor="end" font-size="10">{val:.3g}</text>'
        )
    for i, (arm, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(t):.2f},{sy(mean):.2f}" for (t, mean, _) in pts)
        parts.append(
            f'<g class="series" data-arm="{arm}">'
            f'<polyline class="mean" fill="none" stroke="{color}" '
            f'stroke-width="1.5" points="{coords}"/>'
        )
        for (t, mean, std) in pts:
            if std > 0:
                parts.append(
                    f'<line class="errbar" stroke="{color}" '
                    f'x1="{sx(t):.2f}" y1="{sy(mean - std):.2f}" '
                    f'x2="{sx(t):.2f}" y2="{sy(mean + std):.2f}"/>'
                )
        parts.append("</g>")
        ly = y0 + pad_t + 16 * (i + 1)
        lx = x0 + width - pad_r + 10
        parts.append(
            f'<line class="legend-swatch" stroke="{color}" stroke-width="3" '
            f'x1="{lx:.2f}" y1="{ly - 4:.2f}" x2="{lx + 18:.2f}" y2="{ly - 4:.2f}"/>'
        )
        parts.append(
            f'<text class="legend" x="{lx + 24:.2f}" y="{ly:.2f}" '
            f'font-size="11">{arm}</text>'
        )
    return parts


def render_svg(rows: list[dict], path: str) -> None:
    rel = _series(rows, "rel_regret")
    panels = [(rel, "relative regret")]
    infeas = _series(rows, "infeasibility")
    if any(v > 0 for pts in infeas.values() for (_, v, _) in pts):
        panels.append((infeas, "infeasibility"))
    width, panel_h = 640.0, 360.0
    height = panel_h * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    for i, (series, label) in enumerate(panels):
        parts.extend(_panel_svg(series, label, 0.0, i * panel_h, width, panel_h))
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def cmd_plot(csv_path: str, svg_path: str) -> int:
    try:
        rows = _read_csv(csv_path)
    except OSError as exc:
        print(f"cannot read csv: {exc}", file=sys.stderr)
        return 2
    if not rows:
        print("csv has no data rows", file=sys.stderr)
        return 2
    instances = sorted({row["instance"] for row in rows})
    try:
        if len(instances) == 1:
            render_svg(rows, svg_path)
            written = [svg_path]
        else:
            written = []
            stem, dot, suffix = svg_path.rpartition(".")
            if not dot:
                stem, suffix = svg_path, "svg"
            for name in instances:
                sub = [row for row in rows if row["instance"] == name]
                path = f"{stem}-{name}.{suffix}"
                render_svg(sub, path)
                written.append(path)
    except ConfigurationError as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# verification suite


def _verify_oracles(rng) -> str | None:
    from .gradcheck import argmax_margin  # noqa: F401  (import sanity)
    from .oracles import GridPathRegion, KnapsackRegion, brute_force_solve

    for k in (1, 3, 8):
        region = KnapsackRegion(8, k)
        verts = region.vertices()
        for _ in range(150):
            c = rng.normal(size=8) * rng.uniform(0.5, 3.0)
            if c @ region.solve(c) != c @ brute_force_solve(c, verts):
                return f"knapsack objective mismatch at k={k}"
    region = GridPathRegion(4)
    verts = region.vertices()
    for _ in range(150):
        c = rng.normal(size=region.dim)
        if c @ region.solve(c) != c @ brute_force_solve(c, verts):
            return "grid path objective mismatch"
    return None


def _verify_surrogate(rng) -> str | None:
    from . import losses as losses_mod
    from .oracles import KnapsackRegion

    region = KnapsackRegion(6, 2)
    for _ in range(300):
        c = rng.normal(size=6)
        c_hat = rng.normal(size=6)
        if losses_mod.spo_plus_loss(c, c, region) != 0.0:
            return "surrogate not zero at the truth"
        plus = losses_mod.spo_plus_loss(c_hat, c, region)
        true = float(c @ (region.solve(c) - region.solve(c_hat)))
        if not (plus >= true - 1e-12 and true >= -1e-12):
            return "surrogate does not dominate the regret"
    return None


def _verify_surrogate_subgrad(rng) -> str | None:
    from . import losses as losses_mod
    from .gradcheck import argmax_margin, central_difference, relative_error
    from .oracles import KnapsackRegion

    region = KnapsackRegion(5, 2)
    verts = region.vertices()
    checked = 0
    while checked < 20:
        c = rng.normal(size=5)
        c_hat = rng.normal(size=5)
        if argmax_margin(2 * c_hat - c, verts) <= 1e-3:
            continue
        grad = losses_mod.spo_plus_subgrad_cost(c_hat, c, region)
        fd = central_difference(
            lambda ch: losses_mod.spo_plus_loss(ch, c, region), c_hat
        )
        if relative_error(fd, grad) > 1e-5:
            return f"surrogate subgradient mismatch (rel err {relative_error(fd, grad):.2e})"
        checked += 1
    return None


def _verify_squared_losses(rng) -> str | None:
    from .gradcheck import central_difference, relative_error
    from .losses import ls_cost_grad, ls_cost_loss

    for _ in range(20):
        c = rng.normal(size=6)
        c_hat = rng.normal(size=6)
        fd = central_difference(lambda ch: ls_cost_loss(ch, c), c_hat)
        if relative_error(fd, ls_cost_grad(c_hat, c)) > 1e-6:
            return "squared cost loss gradient mismatch"
    return None


def _verify_model_gradients(rng) -> str | None:
    from .core import Arrival, DualPair
    from .gradcheck import (
        argmax_margin,
        param_gradient_analytic,
        param_gradient_fd,
        relative_error,
    )
    from .models import LinearModel, MlpModel
    from .oracles import KnapsackRegion

    p, d, m = 3, 4, 2
    region = KnapsackRegion(d, 2)
    verts = region.vertices()
    for cls in (LinearModel, MlpModel):
        for kind in LossKind:
            checked = 0
            while checked < 5:
                model = cls(p, d, m, rng)
                x = rng.normal(size=p)
                mu = Arrival(x, rng.normal(size=d), rng.normal(size=(d, m)))
                omega = DualPair(rng.uniform(-0.5, 0, size=m),
                                 rng.uniform(0, 0.5, size=m))
                zeta = 1.5
                if kind is LossKind.SPO_PLUS:
                    from .core import decision_cost
                    from .models import forward as fwd

                    q = (2 * decision_cost(fwd(model, x), omega, zeta).c
                         - decision_cost(mu, omega, zeta).c)
                    if argmax_margin(q, verts) <= 1e-3:
                        continue
                exact = param_gradient_analytic(model, x, mu, omega, zeta, kind, region)
                fd = param_gradient_fd(model, x, mu, omega, zeta, kind, region)
                if relative_error(fd, exact) > 1e-4:
                    return (f"{cls.__name__}/{kind.value} gradient mismatch "
                            f"(rel err {relative_error(fd, exact):.2e})")
                checked += 1
    return None


def _verify_conjugates(rng) -> str | None:
    from .duals import (
        LeftoverValueUtility,
        SeparableQuadraticUtility,
        UpperBoxSet,
        ZeroUtility,
    )

    m = 3
    utilities = [
        ZeroUtility(m),
        LeftoverValueUtility(rng.uniform(0.5, 2, size=m), rng.uniform(0.5, 2, size=m)),
        SeparableQuadraticUtility(m),
    ]
    for utility in utilities:
        for _ in range(1000):
            v = rng.uniform(0, 1, size=m) if isinstance(utility, SeparableQuadraticUtility) \
                else rng.uniform(0, 3, size=m)
            lam = utility.project_lambda(rng.normal(size=m))
            gap = -utility.value(v) + utility.conj(lam) - lam @ v
            if gap < -1e-9:
                return f"{type(utility).__name__} violates the conjugate inequality"
            star = utility.conj_argmax(v)
            eq = -utility.value(v) + utility.conj(star) - star @ v
            if abs(eq) > 1e-8:
                return f"{type(utility).__name__} equality gap {eq:.2e}"
    cset = UpperBoxSet(rng.uniform(0.5, 2, size=m))
    for _ in range(1000):
        v = rng.uniform(0, 3, size=m)
        theta = cset.project_theta(rng.normal(size=m))
        gap = cset.dist(v) + cset.conj(theta) - theta @ v
        if gap < -1e-9:
            return "consumption set violates the conjugate inequality"
        star = cset.conj_argmax(v)
        eq = cset.dist(v) + cset.conj(star) - star @ v
        if abs(eq) > 1e-8:
            return f"consumption set equality gap {eq:.2e}"
    return None


def _verify_projection(rng) -> str | None:
    from .duals import project_theta_box_ball

    grid = np.linspace(0, 1, 201)
    pts = np.array([(a, b) for a in grid for b in grid])
    pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
    for _ in range(50):
        z = rng.normal(size=2) * 2
        proj = project_theta_box_ball(z)
        again = project_theta_box_ball(proj)
        if not np.array_equal(proj, again):
            return "projection is not idempotent"
        if np.any(proj < 0) or np.linalg.norm(proj) > 1 + 1e-9:
            return "projection output infeasible"
        nearest = pts[np.argmin(np.linalg.norm(pts - z, axis=1))]
        if np.linalg.norm(proj - z) > np.linalg.norm(nearest - z) + 1e-3:
            return "projection farther than grid-search nearest point"
    return None


VERIFY_CHECKS = [
    ("oracle argmax equals enumeration", _verify_oracles),
    ("surrogate zero at truth and dominates regret", _verify_surrogate),
    ("surrogate subgradient matches finite differences", _verify_surrogate_subgrad),
    ("squared losses match finite differences", _verify_squared_losses),
    ("model gradients match finite differences", _verify_model_gradients),
    ("conjugate pairs satisfy the duality inequality", _verify_conjugates),
    ("dual projection optimal, idempotent, feasible", _verify_projection),
]


def cmd_verify() -> int:
    rng = np.random.default_rng(20240101)
    failures = 0
    for name, check in VERIFY_CHECKS:
        tic = time.perf_counter()
        try:
            problem = check(rng)
        except Exception as exc:  # a crash is a failure, not an abort
            problem = f"raised {type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - tic
        status = "PASS" if problem is None else "FAIL"
        detail = "" if problem is None else f"  ({problem})"
        print(f"{status}  {name}  [{elapsed:.2f}s]{detail}")
        if problem is not None:
            failures += 1
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ocdm",
        description="online contextual decision-making experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment grid from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--workers", type=int, default=None, help="parallel trial workers")
    p_run.add_argument("--out", default=None, help="override the CSV output path")
    p_plot = sub.add_parser("plot", help="render regret curves from a results CSV")
    p_plot.add_argument("csv")
    p_plot.add_argument("svg")
    sub.add_parser("verify", help="run the fast property suite")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, seed=args.seed, workers=args.workers, out=args.out)
    if args.command == "plot":
        return cmd_plot(args.csv, args.svg)
    return cmd_verify()


if __name__ == "__main__":
    sys.exit(main())
