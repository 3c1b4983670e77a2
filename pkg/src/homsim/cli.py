"""Command-line pipeline: simulate, calibrate, analyze, fisher, depth, witness.

Commands are batch-style: read a config plus input files, write CSV tables
and JSON reports into the output directory.  Every JSON artifact embeds the
config hash and seed that produced it.  Exit codes: 0 success, 2 invalid
input or config, 3 fit or optimizer non-convergence.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from . import channel, detector, entanglement, fock, metrology, stats

# pair amplitude giving 7.5 atoms on average across both side modes
DEFAULT_XI = math.asinh(math.sqrt(7.5 / 2.0))

HOM_ANGLE = math.pi / 2.0


@dataclass
class RunConfig:
    """Run-level knobs shared by the pipeline commands."""

    xi: float = DEFAULT_XI
    xi_jitter: float = 0.0
    n_max: int = 20
    angles: list = field(default_factory=lambda: list(metrology.SMALL_ROTATION_ANGLES) + [HOM_ANGLE])
    shots_per_angle: int = 3816
    n_values: list = field(default_factory=lambda: [2, 4, 6, 8, 10, 12])
    noise: str | dict | None = "reference"
    resample_samples: int = 1000
    confidence_level: float = 0.68
    quartic: bool = True
    exclude_beyond_node: bool = True

    def __post_init__(self):
        if self.shots_per_angle < 1:
            raise ValueError("shots_per_angle must be positive")
        if any(not 0 <= a <= math.pi for a in self.angles):
            raise ValueError("angles must lie in [0, pi]")
        if self.n_max < 1:
            raise ValueError("n_max must be positive")

    def noise_params(self) -> channel.NoiseModelParams | None:
        if self.noise in (None, "none", "off", "ideal"):
            return None
        if self.noise == "reference":
            return channel.REFERENCE_PARAMS
        if isinstance(self.noise, dict):
            return channel.NoiseModelParams.from_json(self.noise)
        raise ValueError(f"unrecognized noise setting: {self.noise!r}")

    def source(self) -> fock.SqueezedSource:
        return fock.SqueezedSource(xi=self.xi, xi_jitter=self.xi_jitter)

    def canonical(self) -> dict:
        d = asdict(self)
        d["angles"] = [float(a) for a in self.angles]
        d["n_values"] = [int(n) for n in self.n_values]
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            data = json.loads(text)
        else:
            data = {}
            for line in text.splitlines():
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"config line is not key=value: {line!r}")
                key, raw = (s.strip() for s in line.split("=", 1))
                try:
                    data[key] = json.loads(raw)
                except json.JSONDecodeError:
                    data[key] = [json.loads(v) for v in raw.split(",")] if "," in raw else raw
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, fock.DomainError, fock.CapacityError, detector.CalibrationError,
                OSError, json.JSONDecodeError, KeyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except (stats.FitError, channel.ConvergenceError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON or key=value config file.")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed; all randomness derives from it.")
@click.option("--out", "out_dir", type=click.Path(), default="out", show_default=True, help="Output directory.")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker processes for population-based fits.")
@click.pass_context
def main(ctx, config_path, seed, out_dir, threads):
    """Number-resolved two-mode interference pipeline."""
    try:
        cfg = RunConfig.from_file(config_path) if config_path else RunConfig()
    except (ValueError, OSError, json.JSONDecodeError, TypeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    ctx.obj = {"cfg": cfg, "seed": seed, "out": Path(out_dir), "threads": threads}


def _stamp(ctx_obj, payload: dict) -> dict:
    return {"config_hash": ctx_obj["cfg"].hash(), "seed": ctx_obj["seed"], **payload}


def _dump_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _angle_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _predicted(cfg: RunConfig, theta: float) -> fock.TwoModeDistribution:
    src = fock.tmsv_distribution(cfg.source(), n_max=cfg.n_max)
    params = cfg.noise_params()
    if params is None:
        return channel.apply_rotation(src, theta)
    return channel.predict(src, theta, params)


@main.command()
@click.pass_obj
@_guarded
def simulate(obj):
    """Sample per-angle shot tables from the modelled channel."""
    cfg, seed, out = obj["cfg"], obj["seed"], obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    files, tails = {}, {}
    for i, theta in enumerate(cfg.angles):
        dist = _predicted(cfg, theta)
        table = metrology.ShotTable.sample(dist, cfg.shots_per_angle, seed=_angle_seed(seed, i), theta=theta)
        name = f"shots_theta{theta:.6f}.csv"
        table.to_csv(out / name)
        files[f"{theta:.6f}"] = name
        tails[f"{theta:.6f}"] = dist.tail_mass
    params = cfg.noise_params()
    _dump_json(out / "metadata.json", _stamp(obj, {
        "command": "simulate",
        "shots_per_angle": cfg.shots_per_angle,
        "xi": cfg.xi,
        "xi_jitter": cfg.xi_jitter,
        "n_max": cfg.n_max,
        "noise": None if params is None else params.to_json(),
        "files": files,
        "tail_mass": tails,
    }))
    click.echo(f"wrote {len(files)} shot tables to {out}")


@main.command()
@click.argument("signals_csv", type=click.Path(exists=True))
@click.pass_obj
@_guarded
def calibrate(obj, signals_csv):
    """Run the signal-correction chain and fit both detector calibrations."""
    out = obj["out"]
    raw = detector.SignalTable.from_csv(signals_csv)
    no_xtalk, kappas = detector.correct_crosstalk(raw)
    leveled, drift = detector.correct_drift(no_xtalk)
    report = {"command": "calibrate", "crosstalk": kappas, "modes": {}}
    for mode in ("minus", "plus"):
        calib = detector.fit_histogram(leveled.signal(mode))
        report["modes"][mode] = calib.to_json()
        centers, counts, model = detector.histogram_table(leveled.signal(mode), calib)
        _write_csv(out / f"histogram_{mode}.csv", ["signal", "count", "model"],
                   [(f"{c:.3f}", int(k), f"{m:.4f}") for c, k, m in zip(centers, counts, model)])
        ns = np.arange(calib.n_max_fit + 1)
        _write_csv(out / f"noise_curve_{mode}.csv", ["n", "sigma_fit", "sigma_err", "sigma_law"],
                   [(int(n), f"{s:.5f}", f"{e:.5f}", f"{calib.sigma(n):.5f}")
                    for n, s, e in zip(ns, calib.peak_sigmas, calib.peak_sigma_errs)])
        d = drift[mode]
        _write_csv(out / f"drift_{mode}.csv", ["window_start", "center", "correction", "center_stderr"],
                   [(int(s), f"{c:.3f}", f"{k:.3f}", f"{e:.3f}")
                    for s, c, k, e in zip(d.starts, d.centers, d.corrections, d.center_stderr)])
        report["modes"][mode]["detection_fidelity_12"] = detector.detection_fidelity(12, calib)
    _dump_json(out / "calibration.json", _stamp(obj, report))
    click.echo(f"calibration written to {out / 'calibration.json'}")


def _load_dataset(dataset_dir: Path) -> dict[float, metrology.ShotTable]:
    meta_path = dataset_dir / "metadata.json"
    if not meta_path.exists():
        raise ValueError(f"no metadata.json in {dataset_dir}")
    meta = json.loads(meta_path.read_text())
    tables = {}
    for key, name in meta["files"].items():
        theta = float(key)
        tables[theta] = metrology.ShotTable.from_csv(dataset_dir / name, theta=theta)
    return tables


def _find_angle(tables, target, tol=1e-6):
    for theta in tables:
        if abs(theta - target) < tol:
            return theta
    return None


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.pass_obj
@_guarded
def analyze(obj, dataset_dir):
    """Per-N state quality, squeezing, witnesses, and depth from a dataset."""
    cfg, seed, out = obj["cfg"], obj["seed"], obj["out"]
    tables = _load_dataset(Path(dataset_dir))
    zero_key = _find_angle(tables, 0.0)
    hom_key = _find_angle(tables, HOM_ANGLE)
    plan = stats.ResamplePlan(n_samples=cfg.resample_samples, seed=seed)

    report = {"command": "analyze", "per_n": {}, "notices": []}
    if hom_key is None:
        report["notices"].append("no pi/2 dataset: fidelity, parity, squeezing, and depth sections omitted")
    if zero_key is None:
        report["notices"].append("no theta=0 dataset: variance, z-parity, squeezing, and depth sections omitted")

    collective_rows, weights = [], []
    parity_rows, squeeze_rows, depth_rows = [], [], []
    for n in cfg.n_values:
        entry: dict = {}
        p0 = ph = None
        if hom_key is not None:
            ph = metrology.empirical_distribution(tables[hom_key], n)
            entry["fidelity_vs_ideal"] = metrology.fidelity(ph, fock.holland_burnett(n))
            moments = fock.collective_moments(ph)
            signs = (-1.0) ** (n - np.arange(n + 1))
            samples = stats.multinomial_resample(ph.probs, ph.n_shots, plan) @ signs
            lo, hi = stats.asymmetric_std(samples, center=moments.parity)
            entry["parity_x"] = {"value": moments.parity, "err_minus": lo, "err_plus": hi}
            entry["jxjy2"] = metrology.jxjy2_estimate(ph)
            parity_rows.append((n, f"{moments.parity:.4f}", f"{lo:.4f}", f"{hi:.4f}"))
        if zero_key is not None:
            p0 = metrology.empirical_distribution(tables[zero_key], n)
            m0 = fock.collective_moments(p0)
            entry["var_jz"] = m0.var_jz
            entry["parity_z"] = m0.parity
        if p0 is not None and ph is not None:
            data = entanglement.collective_from_distributions(p0, ph)
            entry["symmetry_J"] = data.symmetry_J
            collective_rows.append(data)
            weights.append(p0.n_shots)
            try:
                sq = metrology.generalized_squeezing(data.var_jz, data.jxjy2, n)
                entry["squeezing"] = {"linear": sq.linear, "db": sq.db}
                squeeze_rows.append((n, f"{sq.linear:.5f}", f"{sq.db:.2f}"))
            except ValueError as exc:
                entry["squeezing"] = {"notice": str(exc)}
            point_p = entanglement.depth_parity(data)
            point_v = entanglement.depth_variance(data)
            conf_p = entanglement.depth_with_resampling(p0, ph, "parity", plan, cfg.confidence_level)
            conf_v = entanglement.depth_with_resampling(p0, ph, "variance", plan, cfg.confidence_level)
            entry["depth"] = {
                "parity_point": point_p.depth, "parity_method": point_p.method,
                "variance_point": point_v.depth,
                "parity_confident": conf_p.depth, "variance_confident": conf_v.depth,
                "level": cfg.confidence_level,
            }
            depth_rows.append((n, point_p.depth, conf_p.depth, point_v.depth, conf_v.depth))
        report["per_n"][str(n)] = entry

    if collective_rows:
        wit = entanglement.witness_indefinite_n(collective_rows, weights=weights)
        report["witness_indefinite_n"] = {
            "value": wit.value, "entangled": wit.entangled,
            "per_n": {str(k): v for k, v in wit.per_n.items()},
            "weights": {str(d.n_total): w / sum(weights) for d, w in zip(collective_rows, weights)},
        }
        dbs = [report["per_n"][str(n)].get("squeezing", {}).get("db") for n in cfg.n_values]
        finite = [d for d in dbs if isinstance(d, float) and math.isfinite(d)]
        if finite:
            report["squeezing_db_mean"] = float(np.mean(finite))
        _write_csv(out / "collective.csv",
                   ["N", "var_jz", "jxjy2", "parity_z", "parity_x", "symmetry_J"],
                   [(d.n_total, f"{d.var_jz:.5f}", f"{d.jxjy2:.4f}", f"{d.parity_z:.4f}",
                     f"{d.parity_x:.4f}", f"{d.symmetry_J:.4f}") for d in collective_rows])
    if parity_rows:
        _write_csv(out / "parity.csv", ["N", "parity_x", "err_minus", "err_plus"], parity_rows)
    if squeeze_rows:
        _write_csv(out / "squeezing.csv", ["N", "xi2_gen", "xi2_gen_db"], squeeze_rows)
    if depth_rows:
        _write_csv(out / "depth.csv",
                   ["N", "parity_point", "parity_confident", "variance_point", "variance_confident"],
                   depth_rows)
    _dump_json(out / "report.json", _stamp(obj, report))
    click.echo(f"report written to {out / 'report.json'}")


@main.command()
@click.option("--exact", type=click.Choice(["ideal", "model"]), default=None,
              help="Skip sampling: run on exact distributions of the named state family.")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Shot-table directory produced by simulate (sampled pipeline).")
@click.pass_obj
@_guarded
def fisher(obj, exact, dataset_dir):
    """Statistical-distance Fisher information and its N-scaling."""
    cfg, seed, out = obj["cfg"], obj["seed"], obj["out"]
    if (exact is None) == (dataset_dir is None):
        raise ValueError("choose exactly one of --exact or --dataset")
    angles = [a for a in cfg.angles if a < 1.0]
    if len(angles) < 3:
        raise ValueError("need at least three small probe angles")
    exclusions = metrology.DEFAULT_EXCLUSIONS if cfg.exclude_beyond_node else {}
    if exact is not None:
        dists: dict[int, dict[float, np.ndarray]] = {}
        if exact == "ideal":
            for n in cfg.n_values:
                dists[n] = {t: fock.twin_fock_output(n, t).probs for t in angles}
        else:
            per_theta = {t: _predicted(cfg, t) for t in angles}
            for n in cfg.n_values:
                dists[n] = {t: per_theta[t].fixed_n(n).probs for t in angles}
        est = metrology.fisher_from_distributions(dists, angles=angles, quartic=cfg.quartic,
                                                  exclusions=exclusions)
        source = f"exact-{exact}"
    else:
        tables = {t: tab for t, tab in _load_dataset(Path(dataset_dir)).items() if t < 1.0}
        plan = stats.ResamplePlan(n_samples=min(cfg.resample_samples, 500), seed=seed)
        est = metrology.fisher_from_shots(tables, cfg.n_values, plan=plan,
                                          quartic=cfg.quartic, exclusions=exclusions)
        source = f"sampled:{dataset_dir}"
    payload = est.to_json()
    payload["source"] = source
    _dump_json(out / "fisher.json", _stamp(obj, payload))
    rows = []
    for n in sorted(est.aggregated):
        fbar, dfbar = est.aggregated[n]
        fit_val = est.scaling.predict(n) if est.scaling else float("nan")
        rows.append((n, f"{fbar:.4f}", f"{dfbar:.4f}", f"{float(fit_val):.4f}"))
    _write_csv(out / "fisher_scaling.csv", ["N", "F_mean", "F_err", "F_fit"], rows)
    if est.scaling:
        click.echo(f"scaling: r={est.scaling.r:.4f}+-{est.scaling.r_err:.4f} "
                   f"s={est.scaling.s:.4f}+-{est.scaling.s_err:.4f}")
    click.echo(f"fisher results written to {out / 'fisher.json'}")


def _load_rows(path: Path):
    payload = json.loads(Path(path).read_text())
    raw = payload["rows"] if isinstance(payload, dict) else payload
    rows = [entanglement.CollectiveData.from_json(r) for r in raw]
    weights = payload.get("weights") if isinstance(payload, dict) else None
    return rows, weights


@main.command()
@click.argument("rows_json", type=click.Path(exists=True))
@click.pass_obj
@_guarded
def depth(obj, rows_json):
    """Point-estimate entanglement depth for stored collective-moment rows."""
    out = obj["out"]
    rows, _ = _load_rows(Path(rows_json))
    results = []
    for data in rows:
        rp = entanglement.depth_parity(data)
        rv = entanglement.depth_variance(data)
        results.append({"n_total": data.n_total, "parity": rp.to_json(), "variance": rv.to_json()})
    _dump_json(out / "depth.json", _stamp(obj, {"command": "depth", "results": results}))
    _write_csv(out / "depth.csv", ["N", "depth_parity", "parity_method", "depth_variance"],
               [(r["n_total"], r["parity"]["depth"], r["parity"]["method"], r["variance"]["depth"])
                for r in results])
    for r in results:
        click.echo(f"N={r['n_total']}: parity depth {r['parity']['depth']} ({r['parity']['method']}), "
                   f"variance depth {r['variance']['depth']}")


@main.command()
@click.argument("rows_json", type=click.Path(exists=True))
@click.pass_obj
@_guarded
def witness(obj, rows_json):
    """Entanglement witnesses for stored collective-moment rows."""
    out = obj["out"]
    rows, weights = _load_rows(Path(rows_json))
    total = entanglement.witness_indefinite_n(rows, weights=weights)
    payload = {
        "command": "witness",
        "indefinite_n": {"value": total.value, "entangled": total.entangled,
                         "per_n": {str(k): v for k, v in total.per_n.items()}},
        "parity_xyz": [],
    }
    for data in rows:
        pw = entanglement.parity_witness_xyz(data)
        payload["parity_xyz"].append({"n_total": data.n_total, "value": pw.value, "entangled": pw.entangled})
    _dump_json(out / "witness.json", _stamp(obj, payload))
    click.echo(f"indefinite-N witness: {total.value:.4f} ({'entangled' if total.entangled else 'not certified'})")


if __name__ == "__main__":
    main()
