"""Self-supervised ADMM reconstruction of frame stacks from a MetaSpectrum.

Each channel (amplitude, phase) is recovered independently by alternating
three updates: fit an untrained conv generator so that its output explains
the measurement and stays close to the running estimate, pull the estimate
toward the generator output with a denoising step, and update the multiplier.
The generator is re-initialized from a seeded draw at the start of every
outer iteration and re-trained, so no pre-training is involved; its
structure alone regularizes the inversion.  Decoding with the wrong
codebook therefore degrades instead of failing, which is the encryption
property of the amplitude response.

All randomness is derived from the config seed; decodes are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import RisCodebook
from .codec import MetaSpectrumPair, SensingOperator, differential_decode
from .metrics import psnr
from .nets import ConvGenerator
from .scene import SpectrumPair

_NOISE_SCALE = 0.5  # uniform input-noise amplitude for the generator


class DecodeError(RuntimeError):
    pass


@dataclass
class DecodeConfig:
    """Decoder knobs.  ``alpha1``/``alpha2`` weight the two channels in the
    joint objective; since the channels are decoded independently they do
    not alter any result and are retained for interface fidelity only."""

    beta1: float = 0.5
    beta2: float = 0.5
    alpha1: float = 1.0
    alpha2: float = 1.0
    sd_step: float = 0.5
    inner_iters: int = 600
    theta_iters: int = 300
    outer_iters: int = 18
    seed: int = 0
    denoiser: str = "sd"  # "sd" | "tv"
    prior: str = "conv"  # "conv" | "none"
    theta_lr: float = 0.01
    hidden_channels: int = 16
    stages: int = 3
    tv_lambda: float = 0.01
    tv_iters: int = 30
    tv_time_weight: float = 4.0
    early_stop_rtol: float | None = None

    def __post_init__(self):
        if self.beta1 <= 0 or self.beta2 <= 0:
            raise ValueError("penalty weights must be positive")
        if not 0 < self.sd_step < 2:
            raise ValueError("sd_step must lie in (0, 2) for the x-update to contract")
        if min(self.inner_iters, self.theta_iters, self.outer_iters) < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.denoiser not in ("sd", "tv"):
            raise ValueError(f"unknown denoiser {self.denoiser!r}")
        if self.prior not in ("conv", "none"):
            raise ValueError(f"unknown prior {self.prior!r}")

    def beta(self, channel: int) -> float:
        return self.beta1 if channel == 0 else self.beta2


@dataclass
class GeneratorState:
    """Generator network, its flat parameter vector and the fixed input
    noise used for one whole decode."""

    net: ConvGenerator
    params: np.ndarray
    noise: np.ndarray
    lr: float

    def output(self) -> np.ndarray:
        return self.net(self.params, self.noise)


@dataclass
class AdmmState:
    """Per-channel solver state: estimate, multiplier, generator."""

    x: np.ndarray
    t: np.ndarray
    generator: GeneratorState | None


@dataclass
class DecodeTrace:
    """Per-outer-iteration log of one decode."""

    objective_amp: list[float] = field(default_factory=list)
    objective_phase: list[float] = field(default_factory=list)
    psnr_amp: list[float] | None = None
    psnr_phase: list[float] | None = None
    hamming_mean: list[float] | None = None

    def csv_rows(self) -> list[str]:
        # With early stopping the channels may run different iteration
        # counts; cells past a channel's end stay empty.
        def cell(values, i, fmt):
            return fmt.format(values[i]) if values is not None and i < len(values) else ""

        rows = ["iter,objective_amp,objective_phase,psnr_amp,psnr_phase"]
        for i in range(max(len(self.objective_amp), len(self.objective_phase))):
            rows.append(
                ",".join(
                    [
                        str(i),
                        cell(self.objective_amp, i, "{:.12e}"),
                        cell(self.objective_phase, i, "{:.12e}"),
                        cell(self.psnr_amp, i, "{:.6f}"),
                        cell(self.psnr_phase, i, "{:.6f}"),
                    ]
                )
            )
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.csv_rows()) + "\n")


def _objective(z, op, g, x, t, beta):
    resid = z - op.forward(g)
    prox = x - g - t
    return float(np.sum(resid * resid) + beta * np.sum(prox * prox))


def fit_generator(
    state: AdmmState,
    z: np.ndarray,
    op: SensingOperator,
    cfg: DecodeConfig,
    channel: int = 0,
) -> GeneratorState:
    """Gradient fit of the generator against measurement and proximity
    targets.

    Minimizes ||z - Phi g||^2 + beta ||x - g - t||^2 over the generator
    parameters.  Steps follow the exact reverse-mode gradient through a
    momentum + diagonal second-moment scaling (plain descent on the raw
    gradient converges an order of magnitude slower on this depth of
    network), made monotone by backtracking: a candidate that raises the
    objective halves the step and retries along the bare gradient, so the
    objective never increases across accepted steps.  Ten consecutive
    non-finite evaluations abort the decode (diverged step size).
    """
    gen = state.generator
    if gen is None:
        raise DecodeError("fit_generator requires a generator prior")
    beta = cfg.beta(channel)

    def evaluate(params):
        # overflow here just means a too-large trial step; the backtracking
        # loop handles the resulting non-finite objective
        with np.errstate(over="ignore", invalid="ignore"):
            g, caches = gen.net.forward(params, gen.noise)
            return _objective(z, op, g, state.x, state.t, beta), g, caches

    f, g, caches = evaluate(gen.params)
    lr = gen.lr
    m = np.zeros_like(gen.params)
    v = np.zeros_like(gen.params)
    for step in range(1, cfg.theta_iters + 1):
        dresid = -2.0 * op.adjoint(z - op.forward(g))
        dprox = -2.0 * beta * (state.x - g - state.t)
        grad = gen.net.backward(gen.params, caches, dresid + dprox)
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        scale = np.sqrt(v / (1.0 - 0.999 ** step)) + 1e-8
        direction = (m / (1.0 - 0.9 ** step)) / scale
        non_finite = 0
        accepted = False
        for _ in range(40):
            cand = gen.params - lr * direction
            f_new, g_new, caches_new = evaluate(cand)
            if math.isfinite(f_new) and f_new <= f:
                gen.params, f, g, caches = cand, f_new, g_new, caches_new
                lr = min(lr * 1.5, cfg.theta_lr)
                accepted = True
                break
            if not math.isfinite(f_new):
                non_finite += 1
                if non_finite > 10:
                    raise DecodeError("generator fit diverged: 10 step halvings hit non-finite loss")
            lr *= 0.5
            direction = grad / scale  # momentum may point uphill; retry on the bare gradient
        if not accepted:
            m[:] = 0.0
            lr = cfg.theta_lr * 0.25
    gen.lr = lr
    return gen


def update_x(state: AdmmState, cfg: DecodeConfig) -> np.ndarray:
    """Denoising x-update toward generator output + multiplier."""
    target = state.generator.output() + state.t
    if cfg.denoiser == "sd":
        x = state.x
        for _ in range(cfg.inner_iters):
            x = x - cfg.sd_step * (x - target)
        state.x = x
    else:
        weights = (cfg.tv_time_weight,) + (1.0,) * (target.ndim - 1)
        state.x = tv_denoise(target, cfg.tv_lambda, cfg.tv_iters, axis_weights=weights)
    return state.x


def update_t(state: AdmmState) -> np.ndarray:
    """Multiplier step t <- t + g - x."""
    state.t = state.t + state.generator.output() - state.x
    return state.t


def tv_denoise(
    y: np.ndarray,
    lam: float,
    n_iter: int = 30,
    axis_weights: tuple[float, ...] | None = None,
) -> np.ndarray:
    """Total-variation proximal smoothing, argmin_x 0.5*||x-y||^2 + lam*TV(x).

    Chambolle's dual projection scheme over every axis of the input.  TV is
    weighted per axis (default all ones); for a (time, frequency, sensor)
    frame stack a heavy time weight exploits that the fused frames are
    near-constant within the channel coherence window while the spectral
    ramps along the other axes stay untouched.  The dual step size
    1/(4 * sum of squared weights) satisfies the convergence bound.
    """
    if lam <= 0:
        return y.copy()
    if axis_weights is None:
        axis_weights = (1.0,) * y.ndim
    if len(axis_weights) != y.ndim:
        raise ValueError("need one TV weight per axis")
    tau = 1.0 / (4.0 * sum(w * w for w in axis_weights))
    duals = [np.zeros_like(y) for _ in range(y.ndim)]
    for _ in range(n_iter):
        u = _divergence(duals, axis_weights) - y / lam
        grads = _gradient(u, axis_weights)
        norm = np.sqrt(sum(g * g for g in grads))
        denom = 1.0 + tau * norm
        duals = [(p + tau * g) / denom for p, g in zip(duals, grads)]
    return y - lam * _divergence(duals, axis_weights)


def _gradient(u, weights):
    grads = []
    for axis, w in enumerate(weights):
        g = np.zeros_like(u)
        src = [slice(None)] * u.ndim
        dst = [slice(None)] * u.ndim
        src[axis] = slice(1, None)
        dst[axis] = slice(None, -1)
        g[tuple(dst)] = u[tuple(src)] - u[tuple(dst)]
        if w != 1.0:
            g *= w
        grads.append(g)
    return grads


def _divergence(duals, weights):
    # Adjoint of _gradient on fields whose final slice per axis is zero,
    # which the dual updates preserve.
    div = np.zeros_like(duals[0])
    for axis, (p, w) in enumerate(zip(duals, weights)):
        head = [slice(None)] * p.ndim
        head[axis] = slice(0, 1)
        body_hi = [slice(None)] * p.ndim
        body_hi[axis] = slice(1, None)
        body_lo = [slice(None)] * p.ndim
        body_lo[axis] = slice(None, -1)
        d = np.empty_like(p)
        d[tuple(head)] = p[tuple(head)]
        d[tuple(body_hi)] = p[tuple(body_hi)] - p[tuple(body_lo)]
        if w != 1.0:
            d *= w
        div += d
    return div


def scaled_backprojection(op: SensingOperator, z: np.ndarray) -> np.ndarray:
    """Initial estimate Phi^T(z / diag(Phi Phi^T)); exact inverse for T=1."""
    weight = op.row_weight()
    return op.adjoint(z / np.maximum(weight, 1e-12))


def _decode_channel(z, op, cfg, channel, truth_stack):
    """Run the outer ADMM loop for one channel.

    Returns (final stack, objectives, psnrs or None, per-iteration decoded
    stacks or None).  ``truth_stack`` holds the reference spectrums in the
    decoded (non-differential) domain.  The channel is solved in units
    normalized by the backprojection spread so the generator always fits
    order-one targets; results are scaled back on exit.
    """
    t_count, k_count, l_count = op.masks.shape
    objectives: list[float] = []
    psnrs: list[float] | None = [] if truth_stack is not None else None
    decoded_iters: list[np.ndarray] | None = [] if truth_stack is not None else None

    if cfg.prior == "none":
        x = scaled_backprojection(op, z)
        step = cfg.sd_step / float(np.max(op.row_weight()))
        for _ in range(cfg.outer_iters):
            for _ in range(cfg.inner_iters):
                x = x - step * op.adjoint(op.forward(x) - z)
            resid = z - op.forward(x)
            objectives.append(float(np.sum(resid * resid)))
            _record(x, 1.0, truth_stack, psnrs, decoded_iters)
            if _stop_early(objectives, cfg):
                break
        return x, objectives, psnrs, decoded_iters

    sigma = float(np.std(scaled_backprojection(op, z)))
    if sigma == 0.0 or not math.isfinite(sigma):
        sigma = 1.0
    z = z / sigma

    net = ConvGenerator(t_count, k_count, l_count, hidden=cfg.hidden_channels, stages=cfg.stages)
    noise = np.random.default_rng((cfg.seed, channel, 11)).uniform(
        0.0, _NOISE_SCALE, size=(t_count, k_count, l_count)
    )
    state = AdmmState(
        x=scaled_backprojection(op, z),
        t=np.zeros((t_count, k_count, l_count)),
        generator=None,
    )
    beta = cfg.beta(channel)
    for outer in range(cfg.outer_iters):
        # Fresh re-initialization every outer iteration; the generator is
        # re-trained from scratch against the current (x, t).
        rng = np.random.default_rng((cfg.seed, channel, outer, 17))
        state.generator = GeneratorState(net, net.init_params(rng), noise, lr=cfg.theta_lr)
        fit_generator(state, z, op, cfg, channel)
        update_x(state, cfg)
        update_t(state)
        objectives.append(_objective(z, op, state.generator.output(), state.x, state.t, beta))
        _record(state.x, sigma, truth_stack, psnrs, decoded_iters)
        if _stop_early(objectives, cfg):
            break
    return state.x * sigma, objectives, psnrs, decoded_iters


def _record(x, sigma, truth_stack, psnrs, decoded_iters):
    if truth_stack is None:
        return
    decoded = np.cumsum(x * sigma, axis=2)
    psnrs.append(psnr(decoded, truth_stack))
    decoded_iters.append(decoded)


def _stop_early(objectives, cfg):
    if cfg.early_stop_rtol is None or len(objectives) < 2:
        return False
    prev, cur = objectives[-2], objectives[-1]
    return abs(prev - cur) < cfg.early_stop_rtol * max(abs(prev), 1e-30)


def admm_decode(
    meta: MetaSpectrumPair,
    cb: RisCodebook,
    cfg: DecodeConfig,
    truth: list[SpectrumPair] | None = None,
) -> tuple[list[SpectrumPair], DecodeTrace]:
    """Recover the T spectrum pairs fused into one MetaSpectrum.

    The amplitude and phase channels run the outer loop independently and
    the final estimates are differentially decoded.  A codebook whose
    identity differs from the MetaSpectrum metadata is used as-is (decoding
    simply degrades; that is the encryption property), but mismatched
    shapes are an error.  With ``truth`` (the unmasked original pairs) the
    trace additionally carries per-iteration PSNR and the mean fingerprint
    Hamming distance.
    """
    if cb.amp_masks.shape != (meta.t, meta.k, meta.l):
        raise DecodeError(
            f"codebook shape {cb.amp_masks.shape} does not match MetaSpectrum {(meta.t, meta.k, meta.l)}"
        )
    op = SensingOperator(cb.amp_masks, meta.d)
    truth_amp = np.stack([p.amplitude for p in truth]) if truth is not None else None
    truth_phase = np.stack([p.phase for p in truth]) if truth is not None else None

    x_amp, obj_a, psnr_a, dec_a = _decode_channel(meta.z_amp, op, cfg, 0, truth_amp)
    x_phase, obj_p, psnr_p, dec_p = _decode_channel(meta.z_phase, op, cfg, 1, truth_phase)

    trace = DecodeTrace(objective_amp=obj_a, objective_phase=obj_p, psnr_amp=psnr_a, psnr_phase=psnr_p)
    if truth is not None:
        from .hashing import fingerprint, hamming

        truth_prints = [fingerprint(p, *_fp_shape(meta)) for p in truth]
        trace.hamming_mean = []
        # dec_a/dec_p already live in the decoded (cumulative) domain.
        for amp_stack, phase_stack in zip(dec_a, dec_p):
            dists = [
                hamming(fingerprint(SpectrumPair(np.maximum(a, 0.0), p), *_fp_shape(meta)), tp)
                for a, p, tp in zip(amp_stack, phase_stack, truth_prints)
            ]
            trace.hamming_mean.append(float(np.mean(dists)))

    return differential_decode(x_amp, x_phase), trace


def _fp_shape(meta: MetaSpectrumPair) -> tuple[int, int]:
    return min(8, meta.k), min(8, meta.l)
