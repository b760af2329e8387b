"""Moving-window sweep, indicator normalization, flagging, event extraction.

For every stride-spaced window end, per region: build the window,
standardize rows, form the ring product (for MSR) or the covariance M (for
the other functions), take the spectrum, evaluate each configured LES, and
flag samples where |tau - E_ref| > k sqrt(D_ref).

Reference moments: for MSR both moments come from a cached Monte Carlo
calibration at the exact (N, T, L) in play, because the asymptotic radial
moments carry a finite-size bias of a few sigma at these block sizes (eta
still uses the asymptotic expectation, which is what makes eta ~ 1 read as
"normal"). Covariance LESs use the quadrature expectation and the i.i.d.
fluctuation variance; the latter is conservative on standardized windows.
Alternatively a calibration window range estimates both moments from the
data itself.

A step event occupies exactly the windows whose span contains the jump, so
a permanent level change at t* produces a flagged run over ends
[t*, t* + T - 1]: the "U"-shaped excursion. Event extraction therefore
reports runs, not curve shapes.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AspectRatioError,
    ConfigurationError,
    ContractError,
    InsufficientHistoryError,
    ParameterError,
)
from .ingest import DataSource, RegionPartition, WindowSpec
from .les import (
    COVARIANCE_FUNCTIONS,
    LOG_CLAMP,
    RING_FUNCTIONS,
    clt_variance,
    get_function,
    les,
    lln_expectation,
    mc_ring_msr,
    msr_moments,
)
from .rmm import covariance, ring_product, standardize
from .rng import window_seed
from .spectral import MarchenkoPastur, eigen_general, eigen_hermitian

WHOLE_SYSTEM = "ALL"


@dataclass(frozen=True)
class DetectorConfig:
    window: WindowSpec
    functions: Tuple[str, ...] = ("MSR",)
    threshold_k: float = 3.0
    reference: str = "theoretical"  # or "calibration"
    calibration_range: Optional[Tuple[int, int]] = None  # window-end range, inclusive
    regions: Optional[RegionPartition] = None
    base_seed: int = 0
    kappa4: float = 0.0
    mc_reps: int = 200
    gap_tolerance: int = 2
    min_duration: int = 3
    degenerate_policy: str = "error"
    jobs: int = 1

    def __post_init__(self):
        if self.threshold_k <= 0:
            raise ParameterError(f"detect: threshold k must be positive, got {self.threshold_k}")
        object.__setattr__(self, "functions", tuple(self.functions))
        for name in self.functions:
            get_function(name)
        if self.reference not in ("theoretical", "calibration"):
            raise ParameterError(f"detect: unknown reference mode {self.reference!r}")
        if self.reference == "calibration" and self.calibration_range is None:
            raise ConfigurationError("detect: calibration mode needs a calibration range")
        if self.gap_tolerance < 0 or self.min_duration < 1:
            raise ParameterError("detect: gap tolerance must be >= 0 and min duration >= 1")
        if self.jobs < 1:
            raise ParameterError(f"detect: jobs must be >= 1, got {self.jobs}")


@dataclass
class FunctionSeries:
    """One (region, function) track of the sweep."""

    tau: np.ndarray
    eta: np.ndarray
    flag: np.ndarray          # bool; always False on calibration windows
    scored: np.ndarray        # bool; False marks calibration windows
    e_eta: float              # expectation used for eta
    e_flag: float             # expectation used for flagging
    d_flag: float             # variance used for flagging
    reference: str            # "theoretical" | "monte-carlo" | "calibration"


@dataclass
class IndicatorSeries:
    """Per-timestamp LES values, indexed by window END sample."""

    t: np.ndarray
    data: Dict[Tuple[str, str], FunctionSeries]
    meta: dict = field(default_factory=dict)

    def regions(self) -> List[str]:
        return sorted({r for r, _ in self.data})

    def functions(self) -> List[str]:
        return sorted({f for _, f in self.data})


@dataclass(frozen=True)
class Event:
    region: str
    function: str
    start_t: int
    end_t: int
    peak_sigma: float
    direction: int  # sign of (tau - E_ref) at the peak

    def __post_init__(self):
        if self.end_t < self.start_t:
            raise ContractError("detect: event must end no earlier than it starts")


@dataclass
class EventReport:
    events: List[Event]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "events": [
                {
                    "region": e.region,
                    "function": e.function,
                    "start_t": e.start_t,
                    "end_t": e.end_t,
                    "peak_sigma": e.peak_sigma,
                    "direction": e.direction,
                }
                for e in self.events
            ],
            "meta": self.meta,
        }


# ---------------------------------------------------------------------------
# Core sweep
# ---------------------------------------------------------------------------


def _window_ends(t: int, spec: WindowSpec) -> np.ndarray:
    first = spec.T - 1
    if first >= t:
        raise InsufficientHistoryError(
            f"detect: source with {t} samples is shorter than one window of {spec.T}"
        )
    return np.arange(first, t, spec.stride)


def _tau_for_end(
    values: np.ndarray,
    end: int,
    cfg: DetectorConfig,
    ring_fns: Sequence[str],
    cov_fns: Sequence[str],
) -> Dict[str, float]:
    spec = cfg.window
    block = values[:, end - spec.T + 1 : end + 1]
    jitter_seed, ring_seed = window_seed(cfg.base_seed, end).spawn(2)
    std = standardize(block, policy=cfg.degenerate_policy, seed=jitter_seed)
    out: Dict[str, float] = {}
    if ring_fns:
        rp = ring_product([std] * spec.L, ring_seed)
        lam = eigen_general(rp.values, N=std.N, T=std.T, L=spec.L)
        for name in ring_fns:
            out[name] = les(lam, get_function(name), clamp=True)
    if cov_fns:
        spec_m = eigen_hermitian(covariance(std, "M"), T=std.T, c=std.c)
        for name in cov_fns:
            out[name] = les(spec_m, get_function(name), clamp=True)
    return out


def _sweep_rows(values: np.ndarray, ends: np.ndarray, cfg: DetectorConfig) -> Dict[str, np.ndarray]:
    ring_fns = [f for f in cfg.functions if f in RING_FUNCTIONS]
    cov_fns = [f for f in cfg.functions if f in COVARIANCE_FUNCTIONS]
    taus = {name: np.empty(len(ends)) for name in cfg.functions}

    def work(i_end):
        i, end = i_end
        return i, _tau_for_end(values, int(end), cfg, ring_fns, cov_fns)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(work, enumerate(ends)))
    else:
        results = [work(ie) for ie in enumerate(ends)]
    for i, vals in results:  # merged in end-index order regardless of worker timing
        for name, v in vals.items():
            taus[name][i] = v
    return taus


def _references(
    cfg: DetectorConfig,
    name: str,
    N: int,
    T: int,
    tau: np.ndarray,
    calib_mask: np.ndarray,
) -> Tuple[float, float, float, str]:
    """(e_eta, e_flag, d_flag, mode) for one (region, function) track."""
    c = N / T
    if cfg.reference == "calibration":
        sel = tau[calib_mask]
        if len(sel) < 2:
            raise ConfigurationError(
                f"detect: calibration range holds {len(sel)} windows; need at least 2"
            )
        mu = float(sel.mean())
        return mu, mu, float(sel.var(ddof=1)), "calibration"
    f = get_function(name)
    if name in RING_FUNCTIONS:
        e_eta = msr_moments(c, cfg.window.L).expectation
        mu_mc, var_mc = mc_ring_msr(N, T, cfg.window.L, reps=cfg.mc_reps, seed_base=cfg.base_seed)
        return e_eta, mu_mc, var_mc, "monte-carlo"
    law = MarchenkoPastur(kind="mp2", c=c, sigma2=1.0)
    e = lln_expectation(f, law, N)
    v = clt_variance(f, c, kappa4=cfg.kappa4)
    return e, e, v, "theoretical"


def _calibration_mask(ends: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    if cfg.reference != "calibration":
        return np.zeros(len(ends), dtype=bool)
    lo, hi = cfg.calibration_range
    mask = (ends >= lo) & (ends <= hi)
    return mask


def _assemble(
    ends: np.ndarray,
    taus: Dict[str, np.ndarray],
    cfg: DetectorConfig,
    N: int,
) -> Dict[str, FunctionSeries]:
    calib = _calibration_mask(ends, cfg)
    out = {}
    for name, tau in taus.items():
        e_eta, e_flag, d_flag, mode = _references(cfg, name, N, cfg.window.T, tau, calib)
        eta = tau / e_eta if e_eta != 0.0 else np.full_like(tau, np.nan)
        scored = ~calib
        dev = np.abs(tau - e_flag)
        flag = scored & (dev > cfg.threshold_k * np.sqrt(d_flag))
        out[name] = FunctionSeries(
            tau=tau, eta=eta, flag=flag, scored=scored,
            e_eta=e_eta, e_flag=e_flag, d_flag=d_flag, reference=mode,
        )
    return out


def sweep(src: DataSource, cfg: DetectorConfig) -> IndicatorSeries:
    """Whole-system sweep: one track per configured function, region "ALL"."""
    spec = cfg.window
    if spec.node_subset is not None:
        src = src.restrict(spec.node_subset)
    if src.n > spec.T:
        raise AspectRatioError(
            f"detect: {src.n} nodes exceed window length {spec.T}; choose a node subset"
        )
    ends = _window_ends(src.t, spec)
    taus = _sweep_rows(src.values, ends, cfg)
    data = {
        (WHOLE_SYSTEM, name): fs for name, fs in _assemble(ends, taus, cfg, src.n).items()
    }
    return IndicatorSeries(t=ends, data=data, meta=_meta(cfg, src))


def regional_series(src: DataSource, cfg: DetectorConfig) -> IndicatorSeries:
    """Independent sweeps per region, plus the whole system under "ALL".

    Regions are intersected with the nodes present in the source; regions
    left with fewer than 2 nodes are skipped with a warning. A region wider
    than the window is an error, named explicitly.
    """
    if cfg.regions is None:
        raise ConfigurationError("detect: regional series needs a region partition")
    spec = cfg.window
    universe = src.node_ids if spec.node_subset is None else spec.node_subset
    if len(universe) <= spec.T:
        base = sweep(src, cfg)
    else:
        # too wide for one block: analyze per region only (blockwise mode)
        warnings.warn(
            f"detect: whole system of {len(universe)} nodes exceeds T={spec.T}; "
            'skipping the "ALL" series',
            RuntimeWarning,
            stacklevel=2,
        )
        base = IndicatorSeries(t=_window_ends(src.t, spec), data={}, meta=_meta(cfg, src))
    for region, members in sorted(cfg.regions.regions.items()):
        if region == WHOLE_SYSTEM:
            raise ContractError('detect: region name "ALL" is reserved for the whole system')
        avail = tuple(nid for nid in members if nid in universe)
        if len(avail) < 2:
            warnings.warn(
                f"detect: region {region!r} has {len(avail)} usable nodes; skipped",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        if len(avail) > spec.T:
            raise AspectRatioError(
                f"detect: region {region!r} has {len(avail)} nodes > window length {spec.T}"
            )
        sub = src.restrict(avail)
        taus = _sweep_rows(sub.values, base.t, cfg)
        for name, fs in _assemble(base.t, taus, cfg, sub.n).items():
            base.data[(region, name)] = fs
    return base


def _meta(cfg: DetectorConfig, src: DataSource) -> dict:
    return {
        "T": cfg.window.T,
        "stride": cfg.window.stride,
        "L": cfg.window.L,
        "functions": list(cfg.functions),
        "threshold_k": cfg.threshold_k,
        "reference": cfg.reference,
        "calibration_range": list(cfg.calibration_range) if cfg.calibration_range else None,
        "base_seed": cfg.base_seed,
        "kappa4": cfg.kappa4,
        "mc_reps": cfg.mc_reps,
        "n_nodes": src.n,
        "n_samples": src.t,
        "les_convention": {"MSR": "mean of |lambda|", "other": "sum of phi(lambda)"},
        "haar_draws": "redrawn per window from seed (base_seed, end_index)",
        "log_clamp": LOG_CLAMP,
    }


# ---------------------------------------------------------------------------
# Event extraction
# ---------------------------------------------------------------------------


def extract_events(series: IndicatorSeries, cfg: DetectorConfig) -> EventReport:
    """Merge flagged runs into events.

    Runs separated by at most `gap_tolerance` unflagged samples merge; runs
    shorter than `min_duration` samples are dropped. The event start is the
    first flagged window end, which for a step event is the first window
    containing the post-event sample.
    """
    stride = cfg.window.stride
    events: List[Event] = []
    for (region, name), fs in sorted(series.data.items()):
        idx = np.flatnonzero(fs.flag)
        if idx.size == 0:
            continue
        runs: List[List[int]] = [[idx[0], idx[0]]]
        for i in idx[1:]:
            gap_samples = (series.t[i] - series.t[runs[-1][1]]) - stride
            if gap_samples <= cfg.gap_tolerance:
                runs[-1][1] = i
            else:
                runs.append([i, i])
        sigma = np.sqrt(fs.d_flag) if fs.d_flag > 0 else np.nan
        for lo, hi in runs:
            start_t = int(series.t[lo])
            end_t = int(series.t[hi])
            if end_t - start_t + stride < cfg.min_duration:
                continue
            window = slice(lo, hi + 1)
            dev = fs.tau[window] - fs.e_flag
            peak = int(np.argmax(np.abs(dev)))
            peak_sigma = float(np.abs(dev[peak]) / sigma) if np.isfinite(sigma) else float("inf")
            events.append(
                Event(
                    region=region,
                    function=name,
                    start_t=start_t,
                    end_t=end_t,
                    peak_sigma=peak_sigma,
                    direction=int(np.sign(dev[peak])) or 1,
                )
            )
    events.sort(key=lambda e: (e.start_t, e.region, e.function))
    return EventReport(events=events, meta=dict(series.meta))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def write_indicator_csv(series: IndicatorSeries, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "region", "function", "tau", "eta", "flag"])
        for (region, name), fs in sorted(series.data.items()):
            for i, t in enumerate(series.t):
                writer.writerow(
                    [
                        int(t),
                        region,
                        name,
                        repr(float(fs.tau[i])),
                        repr(float(fs.eta[i])),
                        "anomalous" if fs.flag[i] else "normal",
                    ]
                )


def read_indicator_csv(path) -> IndicatorSeries:
    """Rebuild a series from its CSV (reference moments are not recoverable)."""
    path = Path(path)
    rows: Dict[Tuple[str, str], Dict[int, Tuple[float, float, bool]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            key = (rec["region"], rec["function"])
            rows.setdefault(key, {})[int(rec["t"])] = (
                float(rec["tau"]),
                float(rec["eta"]),
                rec["flag"] == "anomalous",
            )
    if not rows:
        raise ContractError(f"detect: {path} holds no indicator rows")
    ts = sorted(next(iter(rows.values())).keys())
    t_arr = np.array(ts, dtype=int)
    data = {}
    for key, by_t in rows.items():
        if sorted(by_t.keys()) != ts:
            raise ContractError(f"detect: {path} has inconsistent timestamps across tracks")
        tau = np.array([by_t[t][0] for t in ts])
        eta = np.array([by_t[t][1] for t in ts])
        flag = np.array([by_t[t][2] for t in ts], dtype=bool)
        data[key] = FunctionSeries(
            tau=tau, eta=eta, flag=flag, scored=np.ones(len(ts), dtype=bool),
            e_eta=np.nan, e_flag=np.nan, d_flag=np.nan, reference="unknown",
        )
    return IndicatorSeries(t=t_arr, data=data, meta={})


def write_events_json(report: EventReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
