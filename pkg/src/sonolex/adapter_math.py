"""Toy-scale numerical checks of the low-rank adaptation math.

Covers the adapter update delta = (alpha/r) * B @ A, trainable-parameter
counts, a generic affine quantize/dequantize round trip with a bounded
error, token-level sequence negative log-likelihood, and analytic adapter
gradients validated against central finite differences. Everything runs on
small dense matrices; no deep-learning framework is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ShapeMismatchError(ValueError):
    pass


class UnknownTokenError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    """Adapter shape: a d x k base matrix updated through B (d x r) and
    A (r x k), scaled by alpha / r."""

    r: int
    alpha: float
    d: int
    k: int
    dropout: float = 0.0  # recorded only; deterministic checks ignore it

    def __post_init__(self) -> None:
        if not 1 <= self.r <= min(self.d, self.k):
            raise ValueError(f"rank must satisfy 1 <= r <= min(d, k), got r={self.r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def lora_delta(B: np.ndarray, A: np.ndarray, alpha: float, r: int) -> np.ndarray:
    """The adapter update (alpha / r) * B @ A. The result's rank is at
    most r."""
    B = np.asarray(B, dtype=float)
    A = np.asarray(A, dtype=float)
    if B.ndim != 2 or A.ndim != 2 or B.shape[1] != r or A.shape[0] != r:
        raise ShapeMismatchError(
            f"expected B: (d, {r}) and A: ({r}, k); got {B.shape} and {A.shape}"
        )
    return (alpha / r) * (B @ A)


def param_counts(d: int, k: int, r: int) -> dict[str, int | bool]:
    """Trainable-parameter counts: full fine-tuning updates d*k entries, the
    adapter updates r*(d+k)."""
    if d <= 0 or k <= 0 or r <= 0:
        raise ValueError("dimensions must be positive")
    full = d * k
    adapter = r * (d + k)
    return {"full": full, "adapter": adapter, "adapter_smaller": adapter < full}


def quantize_dequantize(theta: np.ndarray, bits: int = 4) -> np.ndarray:
    """Affine quantization to 2**bits levels over the matrix range, then
    dequantization. Max absolute error is step / 2 where
    step = (max - min) / (2**bits - 1)."""
    if bits < 2:
        raise ValueError("bits must be >= 2")
    theta = np.asarray(theta, dtype=float)
    lo = theta.min()
    hi = theta.max()
    if hi == lo:
        return theta.copy()
    levels = 2**bits - 1
    step = (hi - lo) / levels
    codes = np.rint((theta - lo) / step)
    return lo + codes * step


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class TableModel:
    """Next-token distributions from an explicit bigram table; row i is the
    distribution after token i. The context's last token selects the first
    row."""

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise ValueError("table must be square (V x V)")
        sums = table.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= 1e-12):
            raise ValueError("every conditional distribution must sum to 1")
        self.table = table
        self.vocab_size = table.shape[0]

    @classmethod
    def uniform(cls, vocab_size: int) -> "TableModel":
        return cls(np.full((vocab_size, vocab_size), 1.0 / vocab_size))

    @classmethod
    def deterministic(cls, targets: Sequence[int], vocab_size: int) -> "TableModel":
        """Assigns probability 1 to a fixed successor for every token
        (successors beyond the given cycle default to token 0)."""
        table = np.zeros((vocab_size, vocab_size))
        successor = {t: targets[(i + 1) % len(targets)] for i, t in enumerate(targets)}
        for token in range(vocab_size):
            table[token, successor.get(token, 0)] = 1.0
        return cls(table)

    def next_token_probs(self, context: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        prev = (list(context) + list(prefix))[-1]
        return self.table[prev]


class LowRankLogitModel:
    """Bigram model whose logits come from a quantized base matrix plus the
    trainable low-rank update: logits = P @ (theta_q + (alpha/r) B A)[:, prev].

    P is a fixed projection (vocab_size x d), theta is d x k with k equal to
    the vocabulary size so the previous token indexes a column.
    """

    def __init__(self, config: AdapterConfig, vocab_size: int, seed: int = 0, quant_bits: int = 4):
        if config.k != vocab_size:
            raise ShapeMismatchError("base matrix must have one column per vocabulary token")
        rng = np.random.default_rng(seed)
        self.config = config
        self.vocab_size = vocab_size
        self.theta = rng.normal(0.0, 1.0, size=(config.d, config.k))
        self.theta_q = quantize_dequantize(self.theta, bits=quant_bits)
        self.projection = rng.normal(0.0, 1.0, size=(vocab_size, config.d))
        self.B = np.zeros((config.d, config.r))
        self.A = np.zeros((config.r, config.k))

    def init_adapters(self, scale: float = 0.1, seed: int = 1) -> None:
        rng = np.random.default_rng(seed)
        self.B = rng.normal(0.0, scale, size=self.B.shape)
        self.A = rng.normal(0.0, scale, size=self.A.shape)

    def effective_weights(self) -> np.ndarray:
        return self.theta_q + lora_delta(self.B, self.A, self.config.alpha, self.config.r)

    def next_token_probs(self, context: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        prev = (list(context) + list(prefix))[-1]
        logits = self.projection @ self.effective_weights()[:, prev]
        return softmax(logits)

    def adapter_gradients(
        self, context: Sequence[int], tokens: Sequence[int]
    ) -> tuple[np.ndarray, np.ndarray]:
        """Analytic d(nll)/dB and d(nll)/dA for one (context, sequence)
        pair: accumulate (softmax - onehot) per step, project back through
        P, then through the adapter factors."""
        _validate_tokens(self.vocab_size, context, tokens)
        weights = self.effective_weights()
        grad_w = np.zeros_like(weights)
        history = list(context)
        for token in tokens:
            prev = history[-1]
            probs = softmax(self.projection @ weights[:, prev])
            err = probs.copy()
            err[token] -= 1.0
            grad_w[:, prev] += self.projection.T @ err
            history.append(token)
        scale = self.config.alpha / self.config.r
        return scale * (grad_w @ self.A.T), scale * (self.B.T @ grad_w)


def _validate_tokens(vocab_size: int, context: Sequence[int], tokens: Sequence[int]) -> None:
    for token in list(context) + list(tokens):
        if not 0 <= token < vocab_size:
            raise UnknownTokenError(f"token {token} outside vocabulary of size {vocab_size}")


def sequence_nll(model, context: Sequence[int], tokens: Sequence[int]) -> float:
    """-sum_j log p(s_j | context, s_<j). Verifies on the fly that the sum
    of logs matches the log of the probability product."""
    _validate_tokens(model.vocab_size, context, tokens)
    total = 0.0
    product = 1.0
    prefix: list[int] = []
    for token in tokens:
        probs = model.next_token_probs(context, prefix)
        p = float(probs[token])
        if p <= 0.0:
            return math.inf
        total += -math.log(p)
        product *= p
        prefix.append(token)
    # Factorization check: the chained sum must equal the product form.
    if abs(total - (-math.log(product))) > 1e-12 * max(1.0, abs(total)):
        raise AssertionError("sequence probability factorization mismatch")
    return total


def adapter_grad_check(
    model: LowRankLogitModel,
    context: Sequence[int],
    tokens: Sequence[int],
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic adapter gradients and central
    finite differences, over every entry of B and A."""
    grad_b, grad_a = model.adapter_gradients(context, tokens)
    worst = 0.0
    for matrix, grads in ((model.B, grad_b), (model.A, grad_a)):
        it = np.nditer(matrix, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = matrix[idx]
            matrix[idx] = original + eps
            plus = sequence_nll(model, context, tokens)
            matrix[idx] = original - eps
            minus = sequence_nll(model, context, tokens)
            matrix[idx] = original
            numeric = (plus - minus) / (2 * eps)
            relative = abs(grads[idx] - numeric) / (abs(grads[idx]) + 1e-8)
            worst = max(worst, relative)
    return worst


def descend(
    model: LowRankLogitModel,
    context: Sequence[int],
    tokens: Sequence[int],
    steps: int = 20,
    lr: float = 0.05,
) -> list[float]:
    """Plain gradient descent on (B, A); returns the loss before each update
    plus the final loss (steps + 1 values)."""
    losses = [sequence_nll(model, context, tokens)]
    for _ in range(steps):
        grad_b, grad_a = model.adapter_gradients(context, tokens)
        model.B = model.B - lr * grad_b
        model.A = model.A - lr * grad_a
        losses.append(sequence_nll(model, context, tokens))
    return losses


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: str


def run_verification(seed: int = 0) -> list[CheckResult]:
    """All adapter-math properties with measured errors, for the CLI's
    pass/fail table."""
    results: list[CheckResult] = []
    rng = np.random.default_rng(seed)

    delta = lora_delta(np.array([[1.0], [0.0]]), np.array([[2.0, 3.0]]), alpha=2.0, r=1)
    results.append(
        CheckResult(
            "delta worked example",
            np.array_equal(delta, np.array([[4.0, 6.0], [0.0, 0.0]])),
            f"delta={delta.tolist()}",
        )
    )

    B = rng.normal(size=(8, 2))
    A = rng.normal(size=(2, 8))
    tail = np.linalg.svd(lora_delta(B, A, alpha=16.0, r=2), compute_uv=False)[2:]
    results.append(
        CheckResult("delta rank <= r", bool(np.all(tail < 1e-10)), f"max tail singular value={tail.max():.3e}")
    )

    A2 = rng.normal(size=(2, 8))
    additive = np.allclose(
        lora_delta(B, A + A2, 16.0, 2),
        lora_delta(B, A, 16.0, 2) + lora_delta(B, A2, 16.0, 2),
        atol=1e-12,
    )
    doubling = np.allclose(lora_delta(B, A, 32.0, 2), 2.0 * lora_delta(B, A, 16.0, 2), atol=1e-12)
    results.append(CheckResult("delta linear in A", additive, ""))
    results.append(CheckResult("delta scales with alpha", doubling, ""))

    counts = param_counts(4096, 4096, 64)
    results.append(
        CheckResult(
            "param counts at 4096x4096 r=64",
            counts["full"] == 16_777_216 and counts["adapter"] == 524_288,
            f"full={counts['full']} adapter={counts['adapter']}",
        )
    )

    theta = rng.uniform(0.0, 1.0, size=(32, 32))
    restored = quantize_dequantize(theta, bits=4)
    step = (theta.max() - theta.min()) / 15
    quant_err = float(np.abs(restored - theta).max())
    results.append(
        CheckResult(
            "quantization error <= step/2",
            quant_err <= step / 2 + 1e-12,
            f"max error={quant_err:.3e} bound={step / 2:.3e}",
        )
    )

    uniform_nll = sequence_nll(TableModel.uniform(4), [0], [1, 2, 3])
    nll_err = abs(uniform_nll - 3 * math.log(4))
    results.append(
        CheckResult("uniform nll = t*ln(V)", nll_err <= 1e-12, f"|error|={nll_err:.3e}")
    )

    config = AdapterConfig(r=2, alpha=16.0, d=4, k=5)
    model = LowRankLogitModel(config, vocab_size=5, seed=seed)
    model.init_adapters(seed=seed + 1)
    grad_err = adapter_grad_check(model, [0], [1, 2, 3])
    results.append(
        CheckResult("adapter gradient check", grad_err < 1e-4, f"max relative error={grad_err:.3e}")
    )

    fresh = LowRankLogitModel(config, vocab_size=5, seed=seed)
    fresh.init_adapters(seed=seed + 2)
    losses = descend(fresh, [0], [1, 2, 3], steps=20, lr=0.05)
    strictly_decreasing = all(b < a for a, b in zip(losses, losses[1:]))
    results.append(
        CheckResult(
            "20 descent steps strictly decrease loss",
            strictly_decreasing,
            f"first={losses[0]:.6f} last={losses[-1]:.6f}",
        )
    )

    return results
