"""Network layers: Chebyshev graph convolution, node attention, and the
attention-weighted residual block.

The graph filter follows the three-term recursion T_0 = x, T_1 = Lx,
T_k = 2L T_{k-1} - T_{k-2} on the rescaled Laplacian, so no
eigendecomposition happens at runtime. Attention projects each unit
through tanh, scores it against a trained context vector, and rescales
the input by the softmax weights.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .graph import ScaledLaplacian

MAX_CHEB_ORDER = 16


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ChebConvParams:
    """Chebyshev filter coefficients, one F_in x F_out map per order."""

    theta: Tensor  # (K, F_in, F_out)
    bias: Tensor  # (F_out,)

    @classmethod
    def create(cls, rng, k, f_in, f_out):
        theta = Tensor(glorot_uniform(rng, (k, f_in, f_out), k * f_in, f_out),
                       requires_grad=True)
        return cls(theta=theta, bias=Tensor(np.zeros(f_out), requires_grad=True))

    @property
    def order(self) -> int:
        return self.theta.shape[0]


def cheb_conv_forward(x: Tensor, lap: ScaledLaplacian, params: ChebConvParams) -> Tensor:
    """Spectral graph convolution of batch x N x F_in signals.

    Output = sum_k T_k(L~) x theta_k + bias, evaluated by stacking the
    recursion terms along the feature axis and applying one matmul.
    """
    k, f_in, f_out = params.theta.shape
    if k > MAX_CHEB_ORDER:
        raise ValueError(f"Chebyshev order {k} exceeds guard {MAX_CHEB_ORDER}")
    n = lap.matrix.shape[0]
    if x.ndim != 3 or x.shape[1] != n or x.shape[2] != f_in:
        raise ad.ShapeError(
            f"expected batch x {n} x {f_in} input, got {x.shape}"
        )
    lmat = Tensor(lap.matrix)
    terms = [x]
    if k > 1:
        terms.append(ad.matmul(lmat, x))
    for _ in range(2, k):
        nxt = ad.add(ad.smul(ad.matmul(lmat, terms[-1]), 2.0), ad.smul(terms[-2], -1.0))
        terms.append(nxt)
    stacked = ad.concat(terms, axis=2) if k > 1 else terms[0]
    flat_theta = ad.reshape(params.theta, (k * f_in, f_out))
    return ad.add(ad.matmul(stacked, flat_theta), params.bias)


@dataclass
class AttentionParams:
    """Trainable projection, bias, and context vector of one attention unit."""

    w: Tensor  # (F, F)
    b: Tensor  # (F,)
    u_w: Tensor  # (F,)

    @classmethod
    def create(cls, rng, width):
        return cls(
            w=Tensor(glorot_uniform(rng, (width, width), width, width), requires_grad=True),
            b=Tensor(np.zeros(width), requires_grad=True),
            u_w=Tensor(glorot_uniform(rng, (width,), width, 1), requires_grad=True),
        )


def attention_forward(y: Tensor, params: AttentionParams) -> Tensor:
    """Per-node attention: u_i = tanh(w y_i + b), alpha = softmax(u . u_w)
    over the node axis, output s_i = alpha_i * y_i."""
    if y.ndim != 3:
        raise ad.ShapeError(f"attention expects batch x nodes x features, got {y.shape}")
    width = params.w.shape[0]
    u = ad.tanh(ad.add(ad.matmul(y, params.w), params.b))
    scores = ad.matmul(u, ad.reshape(params.u_w, (width, 1)))  # (B, N, 1)
    alpha = ad.softmax(scores, axis=1)
    return ad.mul(alpha, y)


def attention_weights(y: Tensor, params: AttentionParams) -> Tensor:
    """The softmax weights alone (diagnostics: which nodes the model favors)."""
    width = params.w.shape[0]
    u = ad.tanh(ad.add(ad.matmul(y, params.w), params.b))
    return ad.softmax(ad.matmul(u, ad.reshape(params.u_w, (width, 1))), axis=1)


@dataclass
class ConvUnit:
    """conv -> batch norm -> leaky ReLU -> attention."""

    conv: ChebConvParams
    bn: BatchNormState
    att: AttentionParams

    @classmethod
    def create(cls, rng, k, f_in, f_out, bn_momentum, bn_eps):
        return cls(
            conv=ChebConvParams.create(rng, k, f_in, f_out),
            bn=BatchNormState(f_out, momentum=bn_momentum, eps=bn_eps),
            att=AttentionParams.create(rng, f_out),
        )


@dataclass
class ResidualBlockParams:
    """A stack of conv units plus the (optional) shortcut projection."""

    units: list = field(default_factory=list)
    projection: Tensor | None = None  # (F_in, F_out) when widths differ

    @classmethod
    def create(cls, rng, n_units, k, f_in, f_out, bn_momentum, bn_eps):
        units = []
        width = f_in
        for _ in range(n_units):
            units.append(ConvUnit.create(rng, k, width, f_out, bn_momentum, bn_eps))
            width = f_out
        projection = None
        if f_in != f_out:
            projection = Tensor(glorot_uniform(rng, (f_in, f_out), f_in, f_out),
                                requires_grad=True)
        return cls(units=units, projection=projection)


def conv_unit_forward(x: Tensor, lap: ScaledLaplacian, unit: ConvUnit,
                      slope: float, training: bool) -> Tensor:
    h = cheb_conv_forward(x, lap, unit.conv)
    h = ad.batch_norm(h, unit.bn, training)
    h = ad.leaky_relu(h, slope)
    return attention_forward(h, unit.att)


def residual_block_forward(x: Tensor, lap: ScaledLaplacian, block: ResidualBlockParams,
                           slope: float, training: bool) -> Tensor:
    """Residual branch through the conv units plus the shortcut.

    The shortcut is the identity when input and output widths agree and
    a learned per-node linear projection otherwise.
    """
    h = x
    for unit in block.units:
        h = conv_unit_forward(h, lap, unit, slope, training)
    shortcut = x if block.projection is None else ad.matmul(x, block.projection)
    return ad.add(h, shortcut)
