"""Experiment runners, record output and plot-data reshaping.

Each experiment maps one configuration to a list of
:class:`ExperimentRecord` rows.  Rows are written as CSV (fixed header,
shortest round-trip floats) next to a JSON sidecar holding the full config
and the wall time, so that the CSV bytes depend only on config and seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import observables as obs_lib
from .config import ExperimentConfig, emit_config
from .drivers import birkhoff_logdist, driver_init, generate_sequence
from .errors import EmptySelection, RandGreenError
from .ergodic import (SphericalPartition, alpha_space_mean, birkhoff_alpha_test,
                      brin_katok_entropy, conditional_entropy_rate, fit_derivative_bound,
                      graph_volume_check, green_increments, growth_rate, log_moment_check,
                      log_plus_norms, lyapunov_spectrum, mixing_correlation,
                      partition_entropy_profile, separated_candidates, separated_counts)
from .green import (alpha_sample, green_potential_rows, green_sup_norm, invariance_test,
                    measure_sample)
from .projective import random_points
from .streams import stream

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str
    estimator: str
    index: float
    value: float
    stderr: float
    flags: str
    k: int
    d: int
    driver: str
    depth: int
    samples: int
    orbits: int
    steps: int
    epsilon: float
    seed: int
    config_hash: str
    version: str


FIELDS = [f.name for f in fields(ExperimentRecord)]


class _Recorder:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.rows: list = []
        self.info: dict = {}
        self._hash = cfg.config_hash()

    def add(self, estimator: str, index, value, stderr=float("nan"), flags=()):
        c = self.cfg
        self.rows.append(ExperimentRecord(
            c.experiment, estimator, float(index), float(value), float(stderr),
            ";".join(flags), c.k, c.d, c.driver.kind, c.depth, c.samples, c.orbits, c.steps,
            c.epsilon, c.seed, self._hash, __version__))


def _maps(cfg: ExperimentConfig, n: int) -> list:
    return generate_sequence(driver_init(cfg.driver_spec(), cfg.seed), n)


def _retry_flags(samples) -> tuple:
    return (f"tracking_retries={samples.retries}",) if getattr(samples, "retries", 0) else ()


# ---------------------------------------------------------------------------
# experiments


def _green_converge(cfg, rec):
    maps = _maps(cfg, cfg.n_max)
    probes = random_points(stream(cfg.seed, "green-probe"), cfg.probes, cfg.k)
    inc = green_increments(maps, probes, cfg.n_max)
    ns = np.arange(1, cfg.n_max + 1)
    for n, v in zip(ns, inc):
        rec.add("increment", n, v)
    ok = inc > 0
    fit = growth_rate(ns[ok], np.log(inc[ok]))
    rec.add("slope_log_increment", cfg.n_max, fit.slope, fit.stderr)
    g, _ = green_potential_rows(maps, probes, cfg.n_max)
    rec.add("sup_norm", cfg.n_max, float(np.max(np.abs(g))))
    rec.info["expected_slope"] = -math.log(cfg.d)


def _invariance(cfg, rec):
    maps = _maps(cfg, cfg.depth + 1)
    mu_f = measure_sample(maps, cfg.depth, cfg.samples, cfg.seed, tag="invariance-f")
    mu_Ff = measure_sample(maps[1:], cfg.depth, cfg.samples, cfg.seed, tag="invariance-Ff")
    fs = random_points(stream(cfg.seed, "invariance-fs"), cfg.samples, cfg.k)
    flags = _retry_flags(mu_f) + _retry_flags(mu_Ff)
    observables = [obs_lib.get(n) for n in cfg.observables]
    for i, (oid, disc, se) in enumerate(invariance_test(maps[0], mu_f, mu_Ff, observables)):
        rec.add(f"discrepancy:{oid}", i, disc, se, flags)
    for i, (oid, disc, se) in enumerate(invariance_test(maps[0], mu_f, fs, observables)):
        rec.add(f"control_discrepancy:{oid}", i, disc, se)


def _mixing(cfg, rec):
    maps = _maps(cfg, cfg.depth + cfg.n_max + 1)
    names = list(cfg.observables) + list(cfg.observables)
    phi, psi = obs_lib.get(names[0]), obs_lib.get(names[1])
    mu0 = measure_sample(maps, cfg.depth, cfg.samples, cfg.seed, chain_levels=cfg.n_max + 1,
                         tag="mixing-0")
    rows = []
    for n in range(cfg.n_min, cfg.n_max + 1):
        mun = measure_sample(maps[n:], cfg.depth, cfg.samples, cfg.seed, tag=f"mixing-{n}")
        corr, se = mixing_correlation(maps, mu0, mun, phi, psi, n)
        below = corr <= 3 * se
        rows.append((n, corr, se, below))
        rec.add("corr", n, corr, se, ("below_floor",) if below else ())
        rec.add("green_sup_norm", n, green_sup_norm(maps[n:], cfg.depth, cfg.probes, cfg.seed))
    above = []
    for n, corr, se, below in rows:
        if below:
            break
        above.append((n, corr))
    if len(above) >= 2:
        fit = growth_rate([a[0] for a in above], np.log([a[1] for a in above]))
        rec.add("slope_log_corr", above[-1][0], fit.slope, fit.stderr)
    rec.info["observables"] = [phi.id, psi.id]


def _entropy_separated(cfg, rec):
    maps = _maps(cfg, max(cfg.depth, cfg.n_max))
    X = separated_candidates(maps, cfg.candidates, cfg.seed, cfg.candidate_source, cfg.depth)
    ns = list(range(cfg.n_min, cfg.n_max + 1))
    counts = separated_counts(maps, ns, cfg.epsilon, X)
    for n, s in zip(ns, counts):
        rec.add("separated_count", n, s)
    if len(ns) >= 2:
        fit = growth_rate(ns, np.log(counts))
        rec.add("slope_log_count", cfg.n_max, fit.slope, fit.stderr)


def _entropy_partition(cfg, rec):
    maps = _maps(cfg, max(cfg.depth, cfg.n_max))
    mu = measure_sample(maps, cfg.depth, cfg.samples, cfg.seed, chain_levels=cfg.n_max,
                        tag="partition")
    part = SphericalPartition(cfg.k, cfg.sectors, cfg.rings)
    prof = partition_entropy_profile(maps, mu, part, cfg.n_max)
    for p in prof[cfg.n_min - 1:]:
        rec.add("partition_entropy", p.n, p.value, flags=("undersampled",) if p.undersampled else ())
    if cfg.n_max >= 2:
        rec.add("conditional_entropy", cfg.n_max, conditional_entropy_rate(prof),
                flags=("undersampled",) if prof[-1].undersampled else ())
    rec.info["cells"] = part.n_cells


def _entropy_local(cfg, rec):
    maps = _maps(cfg, max(cfg.depth, cfg.n_max))
    mu = measure_sample(maps, cfg.depth, cfg.samples, cfg.seed, chain_levels=cfg.n_max,
                        tag="brin-katok")
    ns = list(range(cfg.n_min, cfg.n_max + 1))
    table = brin_katok_entropy(maps, mu, ns, [cfg.epsilon], centers=cfg.centers, seed=cfg.seed)
    for a, n in enumerate(ns):
        flags = ("undersampled",) if table.undersampled[a, 0] else ()
        rec.add("brin_katok", n, table.values[a, 0], flags=flags)
    if len(ns) >= 2:
        fit = table.slope()
        rec.add("slope_neglog_mass", cfg.n_max, fit.slope, fit.stderr,
                ("undersampled",) if table.undersampled.any() else ())
    rec.info["min_hits"] = table.min_hits[:, 0].tolist()


def _lyapunov(cfg, rec):
    spec = cfg.driver_spec()
    al = alpha_sample(spec, cfg.depth, cfg.orbits, cfg.seed, extra=cfg.steps,
                      keep_sequences=True, chain_levels=cfg.steps + 1)
    rep = lyapunov_spectrum(None, al, cfg.steps)
    flags = (f"critical={rep.critical}",) if rep.critical else ()
    for i, (v, se) in enumerate(zip(rep.exponents, rep.stderr)):
        rec.add("exponent", i, v, se, flags)
    rec.add("min_exponent", cfg.k - 1, rep.exponents[-1], rep.stderr[-1], flags)
    qr_sum = float(np.sum(rep.per_orbit) * rep.n_steps)
    rel = abs(qr_sum - rep.logdet_total) / max(abs(rep.logdet_total), 1e-300)
    rec.add("qr_logdet_residual", cfg.steps, rel)
    rec.info["bound"] = 0.5 * math.log(cfg.d)


def _birkhoff(cfg, rec):
    state = driver_init(cfg.driver_spec(), cfg.seed)
    mean, prefix = birkhoff_logdist(state, cfg.steps)
    prefix = np.asarray(prefix)
    for n in sorted({max(1, cfg.steps // 4), max(1, cfg.steps // 2), cfg.steps}):
        rec.add("prefix_mean", n, prefix[n - 1])
    half = prefix[cfg.steps // 2:]
    rec.add("cauchy_last_half", cfg.steps, float(np.max(np.abs(half - prefix[-1]))))
    rec.add("mean_logdist", cfg.steps, mean)


def _graph_volume(cfg, rec):
    maps = _maps(cfg, cfg.n_max)
    vol, exact, se = graph_volume_check(maps, cfg.n_max, cfg.samples, cfg.seed)
    rec.add("volume", cfg.n_max, vol, se)
    rec.add("exact_volume", cfg.n_max, exact)
    rec.add("relative_error", cfg.n_max, abs(vol - exact) / exact, se / exact)


def _log_moment(cfg, rec):
    spec = cfg.driver_spec()
    big = alpha_sample(spec, cfg.depth, 2 * cfg.samples, cfg.seed)
    fam = spec.family
    v = log_plus_norms(big.coeffs, fam.d, big.points)
    half = v[:cfg.samples]
    se_half = float(half.std(ddof=1) / math.sqrt(len(half))) if len(half) > 1 else float("nan")
    rep = log_moment_check(big)
    rec.add("mean_log_plus", cfg.samples, float(half.mean()), se_half)
    rec.add("mean_log_plus", 2 * cfg.samples, rep.mean, rep.stderr)
    rec.add("q999_log_plus", cfg.samples, float(np.quantile(half, 0.999)))
    rec.add("q999_log_plus", 2 * cfg.samples, rep.q999)
    dist = fam.distances(big.params)
    rec.add("mean_logdist", 2 * cfg.samples, float(np.mean(np.log(dist))),
            float(np.std(np.log(dist), ddof=1) / math.sqrt(len(dist))))
    J_norm = np.exp(v)
    C, p = fit_derivative_bound(dist, J_norm)
    rec.add("bound_p", 2 * cfg.samples, p)
    rec.add("bound_C", 2 * cfg.samples, C)


def _alpha_ergodic(cfg, rec):
    spec = cfg.driver_spec()
    obs = obs_lib.get(cfg.observables[0])
    mean, se = alpha_space_mean(spec, obs, cfg.samples, cfg.seed + 1, cfg.depth)
    for steps in (max(1, cfg.steps // 2), cfg.steps):
        rep = birkhoff_alpha_test(spec, obs, steps, cfg.orbits, cfg.seed, depth=cfg.depth,
                                  reference=cfg.samples)
        rec.add("spread", steps, rep.spread)
    rec.add("alpha_mean", cfg.steps, mean, se)
    rec.info["observable"] = obs.id


RUNNERS = {
    "green-converge": _green_converge,
    "invariance": _invariance,
    "mixing": _mixing,
    "entropy-separated": _entropy_separated,
    "entropy-partition": _entropy_partition,
    "entropy-local": _entropy_local,
    "lyapunov": _lyapunov,
    "birkhoff": _birkhoff,
    "graph-volume": _graph_volume,
    "log-moment": _log_moment,
    "alpha-ergodic": _alpha_ergodic,
}


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(FIELDS)
    for r in records:
        w.writerow([_fmt(getattr(r, f)) for f in FIELDS])
    return buf.getvalue()


def read_records(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        kw = {}
        for f in fields(ExperimentRecord):
            v = row[f.name]
            kw[f.name] = int(v) if f.type in ("int", int) else float(v) if f.type in ("float", float) \
                else v
        out.append(ExperimentRecord(**kw))
    return out


def write_outputs(cfg: ExperimentConfig, records, info: dict, path=None):
    path = Path(path or cfg.output_path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(records_csv(records))
    sidecar = {"config": json.loads(emit_config(cfg)), "config_hash": cfg.config_hash(),
               "version": __version__, **info}
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, default=float)
    return path


def run_experiment(cfg: ExperimentConfig, *, write: bool = True):
    """Run one experiment.  Returns ``(records, exit_status, info)``;
    module errors propagate (the CLI maps them to exit status 1)."""
    rec = _Recorder(cfg)
    t0 = time.perf_counter()
    RUNNERS[cfg.experiment](cfg, rec)
    rec.info["wall_time_s"] = time.perf_counter() - t0
    status = EXIT_FLAGGED if any("undersampled" in r.flags for r in rec.rows) else EXIT_OK
    rec.info["exit_status"] = status
    if write:
        write_outputs(cfg, rec.rows, rec.info)
    return rec.rows, status, rec.info


# ---------------------------------------------------------------------------
# plot data


@dataclass(frozen=True)
class PlotRow:
    x: float
    y: float
    yerr: float
    series: str


_LOG_ESTIMATORS = {"corr", "increment"}


def emit_plotdata(records, spec: dict | None = None) -> list:
    """Long-format ``(x, y, yerr, series)`` rows from records.

    ``spec`` may filter on ``experiment`` and ``estimator`` (exact match or
    a list).  Correlations and Green increments are log-transformed
    (``yerr`` becomes the relative error) and followed by a fitted-slope
    row whose x is NaN.
    """
    spec = spec or {}

    def keep(r):
        for key in ("experiment", "estimator"):
            want = spec.get(key)
            if want is None:
                continue
            want = [want] if isinstance(want, str) else list(want)
            if getattr(r, key) not in want:
                return False
        return True

    sel = [r for r in records if keep(r)]
    if not sel:
        raise EmptySelection(f"no records match {spec}")
    out = []
    groups: dict = {}
    for r in sel:
        groups.setdefault((r.experiment, r.estimator), []).append(r)
    for (exp, est), rows in groups.items():
        series = f"{exp}:{est}"
        if est in _LOG_ESTIMATORS:
            pts = [(r.index, math.log(r.value), r.stderr / r.value) for r in rows if r.value > 0]
            for x, y, e in pts:
                out.append(PlotRow(x, y, e, f"{series}:log"))
            if len(pts) >= 2:
                fit = growth_rate([p[0] for p in pts], [p[1] for p in pts])
                out.append(PlotRow(float("nan"), fit.slope, fit.stderr, f"{series}:fit_slope"))
        else:
            for r in rows:
                out.append(PlotRow(r.index, r.value, r.stderr, series))
    return out


def plotdata_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["x", "y", "yerr", "series"])
    for r in rows:
        w.writerow([repr(float(r.x)), repr(float(r.y)), repr(float(r.yerr)), r.series])
    return buf.getvalue()


__all__ = ["ExperimentRecord", "FIELDS", "RUNNERS", "run_experiment", "records_csv",
           "read_records", "write_outputs", "emit_plotdata", "plotdata_csv", "PlotRow",
           "EXIT_OK", "EXIT_ERROR", "EXIT_FLAGGED", "RandGreenError"]
