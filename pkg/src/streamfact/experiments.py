"""Image-restoration experiments: mask, factorise, fill in, score.

A run occludes part of every column, learns a dictionary from the observed
entries only, reconstructs each column as ``C x`` with ``x`` fitted on its
observed entries, and reports the signal-to-noise ratio of the
reconstruction against the clean data over all entries::

    snr = 10 log10( |Y|_F^2 / |Y - Y_hat|_F^2 )    [dB]

Exact reconstructions are reported as ``SNR_CAP`` (300 dB).
"""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import NmfConfig, SgdConfig, nmf_multiplicative, sgd_run
from .data import (
    MaskedDataset,
    load_dataset,
    make_bernoulli_mask,
    make_block_mask,
    sample_order,
    save_pgm,
    synthetic_lowrank,
)
from .linalg import ContractViolation, as_matrix
from .model import DictionaryState, ModelConfig, PassTrace, init_state, reconstruct, run_pass

__all__ = [
    "SNR_CAP",
    "ALGORITHMS",
    "DatasetUnavailable",
    "ExperimentConfig",
    "RunReport",
    "snr",
    "build_dataset",
    "run_restoration",
    "compare",
    "write_report",
    "write_comparison",
]

logger = logging.getLogger(__name__)

SNR_CAP = 300.0
ALGORITHMS = ("mfrlf", "mfrlf-kalman", "sgd", "nmf")

# offsets keep the streams for data, mask, init and ordering independent
_DATA_SEED, _MASK_SEED, _ORDER_SEED = 3, 1, 2


class DatasetUnavailable(FileNotFoundError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "mfrlf"
    rank: int = 40
    lam: float = 2.0
    passes: int = 10
    iterations: int = 1000
    mask_fraction: float = 0.25
    mask_mode: str = "block"
    block_len: int | None = None
    v0_scale: float = 1.0
    qv_scale: float = 0.0
    ridge: float = 1e-8
    seed: int = 0
    sampling: str = "epoch"
    sgd_step: str = "broyden"
    gamma0: float = 0.01
    freeze_covariance: bool = False
    data_path: str | None = None
    synthetic: tuple | None = None
    allow_synthetic: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ContractViolation(f"algorithm must be one of {ALGORITHMS}")
        if self.mask_mode not in ("block", "bernoulli"):
            raise ContractViolation("mask_mode must be 'block' or 'bernoulli'")
        if self.passes < 1 or self.iterations < 1:
            raise ContractViolation("passes and iterations must be >= 1")
        if self.qv_scale < 0:
            raise ContractViolation("qv_scale must be >= 0")

    @property
    def label(self):
        if self.algorithm == "sgd":
            return f"sgd-{self.sgd_step}"
        if self.freeze_covariance and self.algorithm.startswith("mfrlf"):
            return self.algorithm + "-frozen"
        return self.algorithm

    def model_config(self):
        QV = None
        if self.algorithm == "mfrlf-kalman":
            QV = self.qv_scale * np.eye(self.rank)
        return ModelConfig(rank=self.rank, lam=self.lam, V0_scale=self.v0_scale,
                           ridge=self.ridge, QV=QV, init_seed=self.seed,
                           freeze_covariance=self.freeze_covariance)

    def echo(self):
        """Flat ``{name: value}`` view for reports."""
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = "x".join(str(t) for t in v)
            out[k] = "" if v is None else v
        return out


@dataclass
class RunReport:
    algorithm: str
    initial_snr: float
    final_snr: float
    snr_trace: list
    residual_trace: list
    wall_time: float
    config: dict
    skipped_steps: int = 0
    failed_columns: list = field(default_factory=list)
    reconstruction: np.ndarray | None = field(default=None, repr=False)

    @property
    def saturated(self):
        return self.final_snr >= SNR_CAP


def snr(reference, estimate):
    """Signal-to-error ratio in dB, capped at ``SNR_CAP``."""
    Y = as_matrix(reference, "reference")
    Yh = as_matrix(estimate, "estimate")
    if Y.shape != Yh.shape:
        raise ContractViolation(f"shape mismatch {Y.shape} vs {Yh.shape}")
    signal = float(np.sum(Y * Y))
    if signal == 0:
        raise ContractViolation("reference is identically zero")
    err = float(np.sum((Y - Yh) ** 2))
    if err == 0:
        return SNR_CAP
    return min(10.0 * np.log10(signal / err), SNR_CAP)


def build_dataset(cfg):
    """Clean data plus the configured mask, as a :class:`MaskedDataset`."""
    if cfg.data_path:
        path = Path(cfg.data_path)
        if path.exists():
            data = load_dataset(path)
        elif cfg.allow_synthetic and cfg.synthetic:
            logger.warning("%s not found, using synthetic data", path)
            data = None
        else:
            raise DatasetUnavailable(
                f"dataset {path} not found; pass a CSV file or a directory of "
                "PGM images, or use --synthetic MxNxK")
    else:
        data = None
    if data is None:
        if not (cfg.allow_synthetic and cfg.synthetic):
            raise DatasetUnavailable(
                "no dataset given; pass --data PATH or --synthetic MxNxK")
        m, n, k = cfg.synthetic
        Y, _, _ = synthetic_lowrank(m, n, k, seed=cfg.seed + _DATA_SEED, nonnegative=True)
        side = int(round(np.sqrt(m)))
        data = MaskedDataset(Y, image_shape=(side, side) if side * side == m else None)

    m, n = data.shape
    if cfg.mask_mode == "block":
        M = make_block_mask(m, n, cfg.mask_fraction, cfg.block_len,
                            seed=cfg.seed + _MASK_SEED)
    else:
        M = make_bernoulli_mask(m, n, cfg.mask_fraction, seed=cfg.seed + _MASK_SEED)
    return data.with_mask(M)


def _pass_residual(trace, start):
    norms = [r.residual_norm for r in trace.records[start:] if not r.skipped]
    return float(np.mean(norms)) if norms else float("nan")


def run_restoration(cfg, data=None):
    """Run one algorithm on one masked dataset and score the result.

    ``data`` overrides dataset construction, which is how :func:`compare`
    shares a single dataset and mask across algorithms.
    """
    if data is None:
        data = build_dataset(cfg)
    if cfg.algorithm == "nmf" and np.any(data.Y < 0):
        raise ContractViolation(
            "NMF needs non-negative data; shift or clip the input first")
    if cfg.rank > data.m:
        raise ContractViolation(f"rank {cfg.rank} exceeds data dimension {data.m}")

    t0 = time.perf_counter()
    initial = snr(data.Y, data.masked())
    snrs, residuals = [], []
    skipped, failed = 0, []
    n = data.n

    if cfg.algorithm == "nmf":
        chunk = max(1, cfg.iterations // cfg.passes)
        nmf_cfg = NmfConfig(rank=cfg.rank, iterations=chunk)
        W = H = None
        done = 0
        while done < cfg.iterations:
            this = min(chunk, cfg.iterations - done)
            res = nmf_multiplicative(data.Y, replace(nmf_cfg, iterations=this),
                                     seed=cfg.seed, M=data.M, W=W, H=H)
            W, H = res.W, res.H
            done += this
            Y_hat = W @ H
            snrs.append(snr(data.Y, Y_hat))
            residuals.append(float(np.sqrt(res.objective[-1])))
    else:
        model = cfg.model_config()
        state = init_state(model, data.m)
        sgd = SgdConfig(cfg.sgd_step, cfg.gamma0, cfg.lam)
        trace = PassTrace()
        for p in range(cfg.passes):
            order = sample_order(n, n, cfg.sampling, cfg.seed + _ORDER_SEED, start=p * n)
            start = len(trace)
            if cfg.algorithm == "sgd":
                C, trace = sgd_run(data, sgd, model, order, C=state.C,
                                   start_step=state.step, trace=trace)
                done = sum(1 for r in trace.records[start:] if not r.skipped)
                state = DictionaryState(C, state.V, state.lam, state.step + done)
            else:
                state, trace = run_pass(state, data, model, order, trace)
            Y_hat, failed = reconstruct(state, data, model.ridge)
            snrs.append(snr(data.Y, Y_hat))
            residuals.append(_pass_residual(trace, start))
        skipped = len(trace.skipped)

    return RunReport(
        algorithm=cfg.algorithm,
        initial_snr=initial,
        final_snr=snrs[-1],
        snr_trace=snrs,
        residual_trace=residuals,
        wall_time=time.perf_counter() - t0,
        config=cfg.echo(),
        skipped_steps=skipped,
        failed_columns=list(failed),
        reconstruction=Y_hat,
    )


def compare(cfgs, data=None):
    """Run several configurations on one shared masked dataset.

    The dataset comes from the first configuration unless given. A run that
    raises is recorded as ``(cfg, None, error message)``; the rest proceed.
    """
    cfgs = list(cfgs)
    if not cfgs:
        return []
    if data is None:
        data = build_dataset(cfgs[0])
    rows = []
    for cfg in cfgs:
        try:
            rows.append((cfg, run_restoration(cfg, data), None))
        except (ContractViolation, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.error("%s failed: %s", cfg.algorithm, exc)
            rows.append((cfg, None, str(exc)))
    return rows


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_report(report, out_dir, data=None, images=True):
    """Write ``report.csv``, ``trace.csv`` and ``restored/<j>.pgm``.

    Wall time is left out of the CSVs so repeated runs give identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["algorithm", "initial_snr_db", "final_snr_db", "saturated",
              "passes_run", "skipped_steps", "failed_columns"]
    row = [report.algorithm, report.initial_snr, report.final_snr, report.saturated,
           len(report.snr_trace), report.skipped_steps, len(report.failed_columns)]
    echo = report.config
    _write_csv(out / "report.csv", header + [f"cfg_{k}" for k in echo],
               [row + list(echo.values())])
    _write_csv(out / "trace.csv", ["pass", "snr_db", "mean_residual"],
               [(p + 1, s, r) for p, (s, r) in
                enumerate(zip(report.snr_trace, report.residual_trace))])

    if images and data is not None and report.reconstruction is not None:
        rdir = out / "restored"
        rdir.mkdir(exist_ok=True)
        lo, hi = float(data.Y.min()), float(data.Y.max())
        if hi <= lo:
            hi = lo + 1.0
        shape = data.image_shape or (data.m, 1)
        for j in range(data.n):
            img = report.reconstruction[:, j].reshape(shape, order="F")
            save_pgm(rdir / f"{j}.pgm", img, lo, hi)
    return out


def write_comparison(rows, path):
    _write_csv(path, ["algorithm", "snr_db", "initial_snr_db", "status"],
               [(cfg.label, rep.final_snr if rep else float("nan"),
                 rep.initial_snr if rep else float("nan"), err or "ok")
                for cfg, rep, err in rows])
