"""Monte-Carlo studies on mixtures of AR(1) populations.

A population is a set of groups sharing an AR(1) covariance ``V`` with
group-specific mean vectors. Pooled over groups, the covariance is

    Sigma = V + sum_g pi_g (mu_g - mu_bar)(mu_g - mu_bar)'

whose between-group part has rank (number of groups - 1) and creates the
spikes. Optional ``spike_values`` add further spikes by replacing the
smallest eigenvalues of ``V`` (their eigenvectors are orthogonal to the AR
top eigenspace).

``run_study`` draws replicate data sets, counts spikes, runs the SP,
d and lambda estimators and compares them with per-replicate truths.
``loocv_shrinkage_mse`` checks how well the shrinkage factors repair
out-of-sample PC scores.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import matmul_toeplitz
from scipy.signal import lfilter

from .errors import BudgetError, DataError, DomainError, HDSpectraError
from .estimators import METHODS, estimate_all, estimate_spikes
from .lsd import GridConfig, fit_psi_model
from .pca import fit_pca, predict_scores
from .spectrum import DiscreteDistribution, PsiModel
from .spike_count import estimate_num_spikes

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

MAX_DENSE_P = 4000
QUANTITIES = ("eigenvalue", "angle", "correlation", "shrinkage")
STUDY_DIR = Path(__file__).with_name("studies")


@dataclass(frozen=True)
class PopulationSpec:
    p: int
    group_sizes: tuple
    mean_atoms: tuple = (-0.3, 0.0, 0.3)
    ar_sigma2: float = 4.0
    ar_rho: float = 0.8
    seed: int = 0
    spike_values: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(g) for g in self.group_sizes))
        object.__setattr__(self, "mean_atoms", tuple(float(a) for a in self.mean_atoms))
        object.__setattr__(self, "spike_values", tuple(sorted((float(s) for s in self.spike_values), reverse=True)))
        if int(self.p) < 1:
            raise DomainError("p must be positive")
        if not self.group_sizes or min(self.group_sizes) < 1:
            raise DomainError("group sizes must be positive")
        if not self.ar_sigma2 > 0:
            raise DomainError("ar_sigma2 must be positive")
        if not 0 <= self.ar_rho < 1:
            raise DomainError("ar_rho must lie in [0, 1)")
        if not self.mean_atoms:
            raise DomainError("need at least one mean atom")

    @property
    def n(self):
        return sum(self.group_sizes)

    @property
    def gamma(self):
        return self.p / self.n

    @classmethod
    def from_mapping(cls, d):
        known = {"p", "group_sizes", "mean_atoms", "ar_sigma2", "ar_rho", "seed", "spike_values"}
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown population keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class StudyConfig:
    name: str
    population: PopulationSpec
    reps: int = 50
    m_max: int = 5
    methods: tuple = METHODS
    loocv: bool = False
    n_eval: int = 100

    @classmethod
    def from_mapping(cls, d, name=None):
        d = dict(d)
        pop = PopulationSpec.from_mapping(d.pop("population"))
        study = dict(d.pop("study", {}))
        if d:
            raise DataError(f"unknown top-level keys: {sorted(d)}")
        study.setdefault("name", name or "custom")
        if "methods" in study:
            study["methods"] = tuple(study["methods"])
            bad = set(study["methods"]) - set(METHODS)
            if bad:
                raise DataError(f"unknown methods {sorted(bad)}")
        known = {"name", "reps", "m_max", "methods", "loocv", "n_eval"}
        if set(study) - known:
            raise DataError(f"unknown study keys: {sorted(set(study) - known)}")
        return cls(population=pop, **study)

    def to_dict(self):
        return {"population": self.population.to_dict(),
                "study": {"name": self.name, "reps": self.reps, "m_max": self.m_max,
                          "methods": list(self.methods), "loocv": self.loocv, "n_eval": self.n_eval}}


def bundled_studies():
    return sorted(p.stem for p in STUDY_DIR.glob("*.toml"))


def load_study(name_or_path):
    """Load a study from a bundled name (e.g. ``study1_quarter``) or a TOML/JSON file."""
    path = Path(name_or_path)
    if not path.exists():
        path = STUDY_DIR / f"{name_or_path}.toml"
        if not path.exists():
            raise DataError(f"unknown study {name_or_path!r}; bundled: {', '.join(bundled_studies())}")
    text = path.read_bytes()
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    return StudyConfig.from_mapping(data, name=path.stem)


def ar1_covariance(p, sigma2, rho):
    return sigma2 * rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))


def ar1_noise(rng, n, p, sigma2, rho):
    """Rows of a stationary AR(1) process: x_1 = s z_1, x_j = rho x_{j-1} + s sqrt(1 - rho^2) z_j."""
    z = rng.standard_normal((n, p))
    s = np.sqrt(sigma2)
    z[:, 0] *= s
    z[:, 1:] *= s * np.sqrt(1.0 - rho * rho)
    if rho == 0:
        return z
    return lfilter([1.0], [1.0, -rho], z, axis=1)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Exact population quantities for a PopulationSpec.

    ``eigenvalues`` is the full spectrum of Sigma, ``eigenvectors`` its top
    ``n_structural`` eigenvectors. The non-spike distribution is everything
    below the structural spikes; a spike is distant when it exceeds S_psi
    of that distribution at gamma = p/n.
    """

    spec: PopulationSpec
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_structural: int
    psi_model: PsiModel
    group_means: np.ndarray
    extra_dirs: np.ndarray = field(repr=False)
    extra_scales: np.ndarray = field(repr=False)

    @property
    def spikes(self):
        return self.eigenvalues[: self.n_structural]

    @property
    def distant(self):
        return self.spikes > self.psi_model.s_psi

    @property
    def true_spikes(self):
        return self.spikes[self.distant]

    @property
    def n_distant(self):
        return int(np.count_nonzero(self.distant))

    @property
    def true_nonspike_edge(self):
        return float(self.eigenvalues[self.n_structural])

    def sigma_times(self, E):
        """``Sigma @ E`` without forming Sigma."""
        s = self.spec
        E = np.asarray(E, dtype=float)
        col = s.ar_sigma2 * s.ar_rho ** np.arange(s.p)
        out = matmul_toeplitz(col, E)
        pi = np.asarray(s.group_sizes, dtype=float) / s.n
        C = self.group_means - pi @ self.group_means
        out = out + C.T @ (pi[:, None] * (C @ E)) if E.ndim > 1 else out + C.T @ (pi * (C @ E))
        for u, c in zip(self.extra_dirs, self.extra_scales):
            out = out + c * np.multiply.outer(u, u @ E)
        return out


def build_population(spec):
    """Mixture covariance, its exact spectrum and the true psi map."""
    p = int(spec.p)
    if p > MAX_DENSE_P:
        raise BudgetError(f"p={p} exceeds the dense eigensolver budget of {MAX_DENSE_P}")
    rng = np.random.default_rng(spec.seed)
    G = len(spec.group_sizes)
    means = rng.choice(np.asarray(spec.mean_atoms), size=(G, p), replace=True)
    pi = np.asarray(spec.group_sizes, dtype=float) / spec.n
    C = means - pi @ means
    V = ar1_covariance(p, spec.ar_sigma2, spec.ar_rho)
    Sigma = V + (C.T * pi) @ C
    k_extra = len(spec.spike_values)
    dirs = np.zeros((0, p))
    scales = np.zeros(0)
    if k_extra:
        vw, vU = np.linalg.eigh(V)
        if np.any(np.asarray(spec.spike_values) <= vw[:k_extra]):
            raise DomainError("spike values must exceed the replaced AR eigenvalues")
        dirs = vU[:, :k_extra].T.copy()
        scales = np.asarray(spec.spike_values) - vw[:k_extra]
        Sigma = Sigma + (dirs.T * scales) @ dirs
    w, U = np.linalg.eigh(Sigma)
    w, U = w[::-1].copy(), U[:, ::-1]
    sv = np.linalg.svd(np.sqrt(pi)[:, None] * C, compute_uv=False)
    rank_between = int(np.sum(sv > 1e-10 * max(1.0, np.sqrt(spec.ar_sigma2))))
    r = rank_between + k_extra
    if r >= p:
        raise DomainError("no non-spiked eigenvalues left")
    E = U[:, : max(r, 1)].copy()
    idx = np.argmax(np.abs(E), axis=0)
    E *= np.sign(E[idx, np.arange(E.shape[1])])
    H = DiscreteDistribution.from_atoms(w[r:])
    return GroundTruth(spec, w, E[:, :r], r, PsiModel(H, spec.gamma), means, dirs, scales)


def draw_sample(spec, truth, rng):
    """One n x p data matrix: group means plus AR(1) noise (plus extra spikes)."""
    n, p = spec.n, spec.p
    labels = np.repeat(np.arange(len(spec.group_sizes)), spec.group_sizes)
    X = ar1_noise(rng, n, p, spec.ar_sigma2, spec.ar_rho)
    X += truth.group_means[labels]
    if truth.extra_scales.size:
        Z = rng.standard_normal((n, truth.extra_scales.size))
        X += (Z * np.sqrt(truth.extra_scales)) @ truth.extra_dirs
    return X


def rep_rng(seed, rep):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(rep),)))


def run_rep(truth, rep, methods=METHODS, m_max=5, fixed_m=None, loss_kind="linf",
            grid_config=GridConfig()):
    """One replicate; returns a plain dict of estimates and truths."""
    spec = truth.spec
    X = draw_sample(spec, truth, rep_rng(spec.seed, rep))
    K = truth.n_distant
    r = max(m_max if fixed_m is None else fixed_m, K, 1)
    model = fit_pca(X, r)
    sample = model.spectrum()
    rec = {"rep": int(rep), "d": sample.d[: max(r, 1)].tolist(), "final_m": None, "error": None,
           "estimates": {}, "truth": {}}
    try:
        if fixed_m is None:
            trace = estimate_num_spikes(sample, m_max, loss_kind=loss_kind, grid_config=grid_config)
            m, fit = trace.final_m, trace.final_fit
        else:
            m = int(fixed_m)
            fit = fit_psi_model(sample, m, loss_kind, grid_config=grid_config) if "lambda" in methods and m else None
    except HDSpectraError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec
    rec["final_m"] = int(m)
    kk = min(m, K)
    Xc = model.transform(X)
    e = model.eigenvectors[:, :K]
    Et = truth.eigenvectors[:, :K]
    cos2 = np.sum(e * Et, axis=0) ** 2
    Se, SE = Xc @ e, Xc @ Et
    corr2 = (np.sum(Se * SE, axis=0) / (np.linalg.norm(Se, axis=0) * np.linalg.norm(SE, axis=0))) ** 2
    shrink = np.sqrt(np.sum(e * truth.sigma_times(e), axis=0) / sample.d[:K])
    rec["truth"] = {"eigenvalue": truth.spikes[:K].tolist(), "cos2_angle": cos2.tolist(),
                    "corr2_score": corr2.tolist(), "shrinkage": shrink.tolist()}
    if kk == 0:
        rec["error"] = "no distant spikes detected"
        return rec
    for meth in methods:
        try:
            est = estimate_all(sample, m, meth, fit.psi_model if fit is not None else None, count=kk)
        except HDSpectraError as exc:
            rec["estimates"][meth] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        rec["estimates"][meth] = {
            name: [float("nan") if v is None else float(v) for v in (getattr(x, name) for x in est.estimates)]
            for name in ("lambda_hat", "cos2_angle", "corr2_score", "shrinkage")
        }
    return rec


_EST_KEY = {"eigenvalue": "lambda_hat", "angle": "cos2_angle", "correlation": "corr2_score", "shrinkage": "shrinkage"}
_TRUTH_KEY = {"eigenvalue": "eigenvalue", "angle": "cos2_angle", "correlation": "corr2_score", "shrinkage": "shrinkage"}


def paired_values(records, method, quantity, k):
    """Per-replicate (estimate, truth) pairs on the reporting scale.

    Angles and correlations are reported as cosines (square roots of the
    squared quantities); replicates where the estimate is missing are
    dropped.
    """
    est, tru = [], []
    for rec in records:
        block = rec["estimates"].get(method)
        if not block or "error" in block:
            continue
        vals = block[_EST_KEY[quantity]]
        truth = rec["truth"].get(_TRUTH_KEY[quantity], [])
        if k >= len(vals) or k >= len(truth) or not np.isfinite(vals[k]):
            continue
        a, b = vals[k], truth[k]
        if quantity in ("angle", "correlation"):
            a, b = np.sqrt(a), np.sqrt(b)
        est.append(a)
        tru.append(b)
    return np.asarray(est, dtype=float), np.asarray(tru, dtype=float)


@dataclass
class StudyReport:
    name: str
    config: dict
    rows: list
    reps: int
    final_m_counts: dict
    records: list = field(repr=False, default_factory=list)

    def row(self, method, quantity, spike):
        for r in self.rows:
            if r["method"] == method and r["quantity"] == quantity and r["spike"] == spike:
                return r
        raise KeyError((method, quantity, spike))

    def to_dict(self, include_records=False):
        out = {"schema": "hdspectra/1", "kind": "study_report", "study": self.name, "reps": self.reps,
               "config": self.config, "final_m_counts": {str(k): v for k, v in sorted(self.final_m_counts.items())},
               "rows": self.rows}
        if include_records:
            out["records"] = self.records
        return out

    def table(self):
        """Plain-text summary laid out like a bias table: bias% (CV%)."""
        methods = sorted({r["method"] for r in self.rows}, key=lambda m: ("sp", "lambda", "d").index(m))
        spikes = sorted({r["spike"] for r in self.rows})
        head = ["method"] + [f"{q[:5]}-{k}" for q in QUANTITIES for k in spikes]
        lines = [" ".join(f"{h:>16}" for h in head)]
        for meth in methods:
            cells = [meth]
            for q in QUANTITIES:
                for k in spikes:
                    r = self.row(meth, q, k)
                    cells.append("n/a" if r["reps_ok"] == 0 else f"{r['bias_pct']:.2f} ({r['cv_pct']:.2f})")
            lines.append(" ".join(f"{c:>16}" for c in cells))
        counts = ", ".join(f"m={k}: {v}" for k, v in sorted(self.final_m_counts.items(), key=lambda kv: str(kv[0])))
        lines.append(f"estimated spike counts over {self.reps} reps: {counts}")
        return "\n".join(lines)


def summarize(name, records, methods, n_spikes, config=None):
    """Aggregate replicate records into bias / CV / SE rows (fixed order, no randomness)."""
    rows = []
    for meth in methods:
        for q in QUANTITIES:
            for k in range(n_spikes):
                est, tru = paired_values(records, meth, q, k)
                ok = est.size
                row = {"study": name, "method": meth, "quantity": q, "spike": k + 1, "reps_ok": int(ok),
                       "reps_failed": len(records) - int(ok), "bias_pct": float("nan"),
                       "cv_pct": float("nan"), "se_pct": float("nan")}
                if ok:
                    mt = tru.mean()
                    ddof = 1 if ok > 1 else 0
                    row["bias_pct"] = float(100.0 * (est - tru).mean() / mt)
                    row["cv_pct"] = float(100.0 * est.std(ddof=ddof) / est.mean())
                    row["se_pct"] = float(100.0 * (est - tru).std(ddof=ddof) / np.sqrt(ok) / mt)
                rows.append(row)
    counts = {}
    for rec in records:
        key = rec["final_m"] if rec["final_m"] is not None else "failed"
        counts[key] = counts.get(key, 0) + 1
    return StudyReport(name, config or {}, rows, len(records), counts, list(records))


def _worker(args):
    truth, rep, methods, m_max, fixed_m = args
    return run_rep(truth, rep, methods, m_max, fixed_m)


def resolve_threads(threads=None):
    if threads is None:
        threads = os.environ.get("HDSPECTRA_THREADS", 1)
    try:
        threads = int(threads)
    except ValueError as exc:
        raise DataError(f"invalid thread count {threads!r}") from exc
    return max(1, threads)


def run_study(config, reps=None, methods=None, m_max=None, fixed_m=None, threads=None, truth=None,
              first_rep=0):
    """Run a Monte-Carlo study and aggregate it into a StudyReport.

    Replicate ``i`` uses an RNG stream derived from ``(seed, i)``, so
    results do not depend on ``threads`` or on how reps are batched.
    """
    if isinstance(config, PopulationSpec):
        config = StudyConfig("custom", config)
    reps = config.reps if reps is None else int(reps)
    if reps < 1:
        raise DomainError("need at least one replicate")
    methods = tuple(config.methods if methods is None else methods)
    m_max = config.m_max if m_max is None else int(m_max)
    truth = build_population(config.population) if truth is None else truth
    jobs = [(truth, first_rep + i, methods, m_max, fixed_m) for i in range(reps)]
    threads = resolve_threads(threads)
    if threads > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=min(threads, reps)) as pool:
            records = list(pool.map(_worker, jobs))
    else:
        records = [_worker(j) for j in jobs]
    cfg = config.to_dict()
    cfg["study"].update(reps=reps, m_max=m_max, methods=list(methods), fixed_m=fixed_m)
    return summarize(config.name, records, methods, truth.n_distant, cfg)


def loocv_shrinkage_mse(config, n_eval=None, methods=METHODS, m=None, truth=None, rep=0, m_max=None,
                        factors=None):
    """Leave-one-out check of shrinkage-adjusted out-of-sample PC scores.

    One data set is drawn. For each evaluated observation the PCA (and
    every estimator) is refitted without it, its score is predicted and
    divided by the method's shrinkage factor, and the result is compared
    with its full-sample score. Both scores are first divided by the
    square root of the eigenvalue of the fit they came from. ``m`` is
    fixed for all folds (by default the full-sample spike count).
    ``"none"`` reports the unadjusted error; ``factors`` maps extra labels
    to fixed per-component shrinkage factors used in every fold.
    """
    if isinstance(config, PopulationSpec):
        config = StudyConfig("custom", config)
    spec = config.population
    if spec.n < 20:
        raise DomainError("need n >= 20 for the leave-one-out study")
    n_eval = min(config.n_eval if n_eval is None else int(n_eval), spec.n)
    truth = build_population(spec) if truth is None else truth
    rng = rep_rng(spec.seed, 10_000_000 + rep)
    X = draw_sample(spec, truth, rng)
    m_max = config.m_max if m_max is None else int(m_max)
    full = fit_pca(X, max(m_max, 1))
    if m is None:
        m = estimate_num_spikes(full.spectrum(), m_max).final_m
    if m < 1:
        raise DomainError("no distant spikes in the full sample")
    full_std = (full.transform(X) @ full.eigenvectors[:, :m]) / np.sqrt(full.eigenvalues[:m])
    idx = np.sort(rng.choice(spec.n, size=n_eval, replace=False))
    factors = {} if factors is None else {k: np.asarray(v, dtype=float) for k, v in factors.items()}
    names = ("none",) + tuple(methods) + tuple(factors)
    sq = {k: [] for k in names}
    failures = {k: 0 for k in names}
    rhos = {k: [] for k in names}
    for j in idx:
        keep = np.ones(spec.n, dtype=bool)
        keep[j] = False
        mod = fit_pca(X[keep], m)
        signs = np.sign(np.sum(mod.eigenvectors * full.eigenvectors[:, :m], axis=0))
        signs[signs == 0] = 1.0
        q = predict_scores(mod, X[j]).scores[0] * signs / np.sqrt(mod.eigenvalues[:m])
        sample = mod.spectrum()
        fit = fit_psi_model(sample, m) if "lambda" in methods else None
        for meth in names:
            if meth == "none":
                rho = np.ones(m)
            elif meth in factors:
                rho = factors[meth]
            else:
                try:
                    est = estimate_spikes(sample, m, meth, fit.psi_model if fit is not None else None)
                except HDSpectraError:
                    failures[meth] += 1
                    continue
                rho = np.array([e.shrinkage if e.distant else np.nan for e in est.estimates])
                if not np.all(np.isfinite(rho)):
                    failures[meth] += 1
                    continue
            rhos[meth].append(rho)
            sq[meth].append((q / rho - full_std[j]) ** 2)
    out = {"schema": "hdspectra/1", "kind": "loocv_mse", "study": config.name, "m": int(m),
           "n_eval": int(n_eval), "mse": {}, "failures": failures, "mean_shrinkage": {}}
    for meth in names:
        out["mse"][meth] = float(np.mean(sq[meth])) if sq[meth] else float("nan")
        out["mean_shrinkage"][meth] = np.mean(rhos[meth], axis=0).tolist() if rhos[meth] else None
    return out
