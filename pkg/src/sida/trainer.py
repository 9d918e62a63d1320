"""The adaptation loop, evaluation, ablations and risk-bound diagnostics.

Each epoch re-encodes the target set, rebuilds the surrogate weights ``W``
(K-means seed, then Laplacian/MI refinement when enabled), and then runs
class-balanced minibatch SGD on

    L_model = L_classify + alpha1 * L_MI + alpha2 * L_auxiliary

``L_laplacian`` depends on ``W`` alone, so it is reported but never
back-propagated into the networks.

Target labels (``hidden_y``) are read only by :func:`evaluate` and
:func:`bound_diagnostics`.
"""

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from . import mi, model, surrogate
from .data import class_balanced_batches
from .numerics import derive_rng
from .surrogate import SurrogateConfig


class NonFiniteLossError(FloatingPointError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"non-finite loss at epoch {report['epoch']} step {report['step']}: {report}")


@dataclass
class TrainConfig:
    alpha1: float = 1.0
    alpha2: float = 0.1
    epochs: int = 60
    batch_size: int = 64
    lr_encoder: float = 0.03
    lr_classifier: float = 0.3
    lr_a: float = 10.0
    lr_b: float = 0.75
    momentum: float = 0.9
    weight_decay: float = 5e-4
    widths: tuple = (32, 32, 16)
    activation: str = "tanh"
    surrogate_config: SurrogateConfig = field(default_factory=SurrogateConfig)
    m1: float = 0.0
    m1_factor: float = 0.0
    m2_factor: float = 2.0
    m2: float = None
    score_sign: int = -1
    eps_norm: float = 1e-8
    mi_enabled: bool = True
    sd_enabled: bool = True
    exact_target_limit: int = 0
    target_batch: int = 64
    check_invariants: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha1 and alpha2 must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.widths = tuple(int(w) for w in self.widths)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def schedules(self):
        return (
            model.LrSchedule(self.lr_encoder, self.lr_a, self.lr_b),
            model.LrSchedule(self.lr_classifier, self.lr_a, self.lr_b),
        )

    def score_params(self, Z):
        """Critic parameters for features ``Z``; relative clamps scale with the median distance."""
        med = mi.median_distance(Z) if (self.m2 is None or self.m1_factor > 0) else 0.0
        m1 = self.m1_factor * med if self.m1_factor > 0 else self.m1
        if self.m2 is not None:
            m2 = float(self.m2)
        else:
            m2 = self.m2_factor * med if med > 0 else np.inf
        return mi.ScoreParams(m1, max(m1, m2), self.score_sign, self.eps_norm)


@dataclass
class EpochReport:
    epoch: int
    l_classify: float
    l_mi: float
    l_auxiliary: float
    l_laplacian: float
    l_model: float
    mi_bound: float
    target_accuracy: float
    wall_ms: float

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RunMetrics:
    seeds: list
    reports: list
    accuracies: list

    @property
    def acc_mean(self):
        return float(np.mean(self.accuracies))

    @property
    def acc_std(self):
        return float(np.std(self.accuracies))


def evaluate(encoder, classifier, target):
    """Accuracy, per-class accuracy and empirical risk on labeled target data.

    With deterministic labels the L1 risk term is 0 for a correct and 2 for
    a wrong prediction, so ``risk = 2 * (1 - accuracy)``.
    """
    y = target.hidden_y
    if y is None:
        raise ValueError("evaluation needs target labels (hidden_y)")
    pred = model.predict(encoder, classifier, target.X)
    correct = pred == y
    acc = float(np.mean(correct))
    per_class = {int(c): float(np.mean(correct[y == c])) for c in np.unique(y)}
    return acc, per_class, 2.0 * (1.0 - acc)


def epoch_surrogate(cfg, Z_S, y_S, Z_T, n_classes, params=None, rng=None):
    """Build the surrogate matrix for one epoch from current features.

    Returns ``(W, l_laplacian)``; ``l_laplacian`` is ``None`` when the
    Laplacian refinement is disabled.
    """
    sc = cfg.surrogate_config
    cen = surrogate.class_centroids(Z_S, y_S, n_classes)
    W = surrogate.init_weights(Z_T, cen, sc.theta_percentile, sc.kmeans_iters)
    if cfg.check_invariants:
        surrogate.check_weights(W)
    if not cfg.sd_enabled:
        return W, None

    lap = surrogate.target_laplacian(Z_T, sc)
    mi_grad = None
    if cfg.mi_enabled:
        src_idx = np.arange(Z_S.shape[0])
        limit = cfg.exact_target_limit
        if Z_S.shape[0] + Z_T.shape[0] > limit:
            # keep the score matrix bounded: class-balanced source subsample
            per = max(1, (limit - min(Z_T.shape[0], limit // 2)) // n_classes)
            src_idx = np.concatenate(
                [rng.choice(np.flatnonzero(y_S == c), per) for c in range(n_classes)]
            )
        S = mi.score_matrix(np.vstack([Z_S[src_idx], Z_T]), params)
        y_src = y_S[src_idx]
        n_t = Z_T.shape[0]

        def w_grad(Wk):
            M = mi.build_mixture_matrix(y_src, n_classes, Wk)
            return mi.mi_grad_w(M, S, n_classes, n_t)

        mi_grad = w_grad

    check = (lambda _step, Wk: surrogate.check_weights(Wk)) if cfg.check_invariants else None
    W = surrogate.update_weights(W, lap.L, mi_grad, sc, callback=check)
    l_lap, _ = surrogate.laplacian_loss_grad(W, lap.L)
    return W, l_lap


def _target_block(W, exact, n_draw, rng):
    """Target rows and their weights for one SGD step.

    Exact mode uses every row of ``W``. Otherwise ``n_draw`` rows are drawn
    per class from that column of ``W`` and weighted by draw frequency,
    which keeps every column a distribution.
    """
    if exact:
        return np.arange(W.shape[0]), W
    n_t, k = W.shape
    counts = np.zeros((n_t, k))
    for j in range(k):
        draws = rng.choice(n_t, size=n_draw, p=W[:, j] / W[:, j].sum())
        np.add.at(counts[:, j], draws, 1.0)
    rows = np.flatnonzero(counts.sum(axis=1) > 0)
    return rows, counts[rows] / n_draw


def train(config, data, evaluate_target=True, progress=None):
    """Train encoder and classifier on a :class:`~sida.data.DomainPair`.

    Returns ``(encoder, classifier, metrics, W)`` where ``W`` is the last
    epoch's surrogate matrix (``None`` if neither component is enabled).
    Identical ``(config, data)`` give bit-identical results.
    """
    cfg = config
    k = data.n_classes
    if cfg.batch_size % k:
        raise ValueError(f"batch_size {cfg.batch_size} not divisible by n_classes {k}")
    init_rng = derive_rng(cfg.seed, "model/init")
    encoder = model.init_encoder(data.source.X.shape[1], cfg.widths, init_rng, cfg.activation)
    classifier = model.init_classifier(encoder.out_dim, k, init_rng)
    enc_state = model.OptimizerState.zeros_like(encoder.tensors(), cfg.momentum, cfg.weight_decay)
    clf_state = model.OptimizerState.zeros_like(classifier.tensors(), cfg.momentum, cfg.weight_decay)
    sched_enc, sched_clf = cfg.schedules()
    batch_rng = derive_rng(cfg.seed, "train/batches")
    target_rng = derive_rng(cfg.seed, "train/target")
    surrogate_rng = derive_rng(cfg.seed, "surrogate/source")

    use_target = cfg.mi_enabled or cfg.sd_enabled
    exact = len(data.target) <= cfg.exact_target_limit
    steps = max(1, len(data.source) // cfg.batch_size)
    total = cfg.epochs * steps
    can_eval = evaluate_target and data.target.hidden_y is not None
    X_T = data.target.X
    reports = []
    W = None

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        l_lap = None
        if use_target:
            Z_S, _ = model.encode_forward(encoder, data.source.X)
            Z_T, _ = model.encode_forward(encoder, X_T)
            params = cfg.score_params(np.vstack([Z_S, Z_T])) if cfg.mi_enabled else None
            W, l_lap = epoch_surrogate(cfg, Z_S, data.source.y, Z_T, k, params, surrogate_rng)
        batches = class_balanced_batches(data.source, cfg.batch_size, steps, batch_rng)
        sums = np.zeros(4)
        for step, idx in enumerate(batches):
            p = (epoch * steps + step) / total
            b = idx.size
            rows = None
            X = data.source.X[idx]
            if use_target:
                rows, W_blk = _target_block(W, exact, cfg.target_batch, target_rng)
                X = np.vstack([X, X_T[rows]])

            Z, cache = model.encode_forward(encoder, X)
            logits, probs = model.classifier_forward(classifier, Z)
            l_cls, g_src = model.classification_loss(probs[:b], data.source.y[idx])
            dlogits = np.zeros_like(logits)
            dlogits[:b] = g_src
            l_aux = l_mi = 0.0
            if cfg.sd_enabled:
                l_aux, g_aux = model.auxiliary_loss(probs[b:], W_blk)
                dlogits[b:] = cfg.alpha2 * g_aux
            dWc, dbc, dZ = model.classifier_backward(classifier, Z, dlogits)
            if cfg.mi_enabled:
                M = mi.build_mixture_matrix(data.source.y[idx], k, W_blk)
                l_mi, g_mi = mi.mi_loss_and_feature_grad(Z, M, params, k)
                dZ = dZ + cfg.alpha1 * g_mi
            dWs, dbs, _ = model.encode_backward(encoder, cache, dZ)

            l_model = l_cls + cfg.alpha1 * l_mi + cfg.alpha2 * l_aux
            if not np.isfinite(l_model):
                raise NonFiniteLossError(
                    {"epoch": epoch, "step": step, "l_classify": l_cls, "l_mi": l_mi, "l_auxiliary": l_aux}
                )
            sums += (l_cls, l_mi, l_aux, l_model)
            model.sgd_step(encoder.tensors(), [*dWs, *dbs], enc_state, model.lr_at(sched_enc, p))
            model.sgd_step(classifier.tensors(), [dWc, dbc], clf_state, model.lr_at(sched_clf, p))

        mean = sums / steps
        acc = evaluate(encoder, classifier, data.target)[0] if can_eval else None
        reports.append(
            EpochReport(
                epoch=epoch,
                l_classify=float(mean[0]),
                l_mi=float(mean[1]) if cfg.mi_enabled else None,
                l_auxiliary=float(mean[2]) if cfg.sd_enabled else None,
                l_laplacian=l_lap,
                l_model=float(mean[0] + cfg.alpha1 * mean[1] + cfg.alpha2 * mean[2]),
                mi_bound=-float(mean[1]) if cfg.mi_enabled else None,
                target_accuracy=acc,
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        if progress is not None:
            progress(reports[-1])

    metrics = RunMetrics([cfg.seed], reports, [reports[-1].target_accuracy] if can_eval else [])
    return encoder, classifier, metrics, W


def run_seeds(config, data_for_seed, seeds):
    """Train once per seed; ``data_for_seed`` maps a seed to a DomainPair."""
    reports, accs, models = [], [], []
    for s in seeds:
        enc, clf, m, W = train(config.replace(seed=s), data_for_seed(s))
        reports.append(m.reports)
        accs.extend(m.accuracies)
        models.append((enc, clf, W))
    return RunMetrics(list(seeds), reports, accs), models


ABLATION_ROWS = [(False, False), (False, True), (True, False), (True, True)]


def ablation_config(config, mi_on, sd_on):
    return config.replace(
        mi_enabled=mi_on,
        sd_enabled=sd_on,
        alpha1=config.alpha1 if mi_on else 0.0,
        alpha2=config.alpha2 if sd_on else 0.0,
    )


def ablation_grid(config, data_for_seed, seeds, runner=None):
    """Run the four MI x SD combinations on shared seeds.

    Returns a list of ``(mi_on, sd_on, RunMetrics)`` in the order base,
    SD only, MI only, full. ``runner`` may replace :func:`run_seeds`
    (e.g. with a parallel map) provided it returns the same structure.
    """
    runner = runner or (lambda c: run_seeds(c, data_for_seed, seeds)[0])
    return [(mi_on, sd_on, runner(ablation_config(config, mi_on, sd_on))) for mi_on, sd_on in ABLATION_ROWS]


def format_ablation(rows):
    lines = ["MI  SD  accuracy (mean +- std)"]
    for mi_on, sd_on, metrics in rows:
        mark = lambda b: "x " if b else "- "  # noqa: E731
        lines.append(f"{mark(mi_on)}  {mark(sd_on)}  {100 * metrics.acc_mean:.2f} +- {100 * metrics.acc_std:.2f}")
    return "\n".join(lines)


def bound_diagnostics(encoder, classifier, W, data, config=None):
    """Report every term of the surrogate risk bound that can be computed.

    The H-delta-H divergence is a supremum over a hypothesis family and is
    reported as ``"not computed"``. Without target labels the target risk
    and the surrogate label risk are omitted.
    """
    cfg = config or TrainConfig()
    k = data.n_classes
    src_pred = model.predict(encoder, classifier, data.source.X)
    source_risk = 2.0 * (1.0 - float(np.mean(src_pred == data.source.y)))

    Z_S, _ = model.encode_forward(encoder, data.source.X)
    Z_T, _ = model.encode_forward(encoder, data.target.X)
    Z_all = np.vstack([Z_S, Z_T])
    S = mi.score_matrix(Z_all, cfg.score_params(Z_all))
    M = mi.build_mixture_matrix(data.source.y, k, W)
    mi_hat = -mi.mi_loss(M, S, k)
    entropy = float(np.log(k))

    q_marginal = W.sum(axis=1) / k
    marginal_l1 = float(np.abs(q_marginal - 1.0 / W.shape[0]).sum())

    report = {
        "source_risk": source_risk,
        "surrogate_mi": mi_hat,
        "neg_4_surrogate_mi": -4.0 * mi_hat,
        "entropy_Y": entropy,
        "4_entropy_Y": 4.0 * entropy,
        "surrogate_marginal_l1": marginal_l1,
        "hdh_divergence": "not computed",
    }
    y = data.target.hidden_y
    if y is not None:
        mass = W.sum(axis=1, keepdims=True)
        q_cond = np.where(mass > 0, W / np.where(mass > 0, mass, 1.0), 1.0 / k)
        label_risk = float(np.mean(2.0 * (1.0 - q_cond[np.arange(y.size), y])))
        bias = marginal_l1 + label_risk
        target_risk = evaluate(encoder, classifier, data.target)[2]
        report.update(
            surrogate_label_risk=label_risk,
            surrogate_bias=bias,
            target_risk=target_risk,
            bound_without_hdh=source_risk - 4.0 * mi_hat + bias + 4.0 * entropy,
        )
    return report
