"""Complex arithmetic on (real, imaginary) pairs of real tensors.

Gradients are taken with respect to real and imaginary parts independently,
which for a real loss matches the conjugate Wirtinger convention.
"""
import numpy as np

from . import tensor as T
from .tensor import Tensor, as_tensor


class CTensor:
    """Complex tensor stored as two real :class:`Tensor` planes."""

    __array_priority__ = 1000

    def __init__(self, re, im):
        self.re = as_tensor(re)
        self.im = as_tensor(im)
        if self.re.shape != self.im.shape:
            raise ValueError("real and imaginary planes must share a shape")

    @classmethod
    def constant(cls, z):
        z = np.asarray(z)
        return cls(Tensor(np.ascontiguousarray(z.real)), Tensor(np.ascontiguousarray(z.imag)))

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    def numpy(self):
        return self.re.data + 1j * self.im.data

    def conj(self):
        return CTensor(self.re, -self.im)

    def abs2(self):
        return self.re * self.re + self.im * self.im

    def __getitem__(self, idx):
        return CTensor(self.re[idx], self.im[idx])

    def reshape(self, *shape):
        return CTensor(self.re.reshape(*shape), self.im.reshape(*shape))

    def transpose(self, *axes):
        return CTensor(self.re.transpose(*axes), self.im.transpose(*axes))

    def __add__(self, other):
        if isinstance(other, CTensor):
            return CTensor(self.re + other.re, self.im + other.im)
        return CTensor(self.re + other, self.im)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, CTensor):
            return CTensor(self.re - other.re, self.im - other.im)
        return CTensor(self.re - other, self.im)

    def __rsub__(self, other):
        return CTensor(other - self.re, -self.im)

    def __neg__(self):
        return CTensor(-self.re, -self.im)

    def __mul__(self, other):
        if isinstance(other, CTensor):
            return CTensor(
                self.re * other.re - self.im * other.im,
                self.re * other.im + self.im * other.re,
            )
        return CTensor(self.re * other, self.im * other)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CTensor(shape={self.shape})"


def ceinsum(subscripts, a, b):
    """Two-operand einsum where either operand may be complex or real."""
    if not isinstance(a, CTensor):
        return CTensor(T.einsum(subscripts, a, b.re), T.einsum(subscripts, a, b.im))
    if not isinstance(b, CTensor):
        return CTensor(T.einsum(subscripts, a.re, b), T.einsum(subscripts, a.im, b))
    re = T.einsum(subscripts, a.re, b.re) - T.einsum(subscripts, a.im, b.im)
    im = T.einsum(subscripts, a.re, b.im) + T.einsum(subscripts, a.im, b.re)
    return CTensor(re, im)


def real_embedding(q):
    """Map complex (..., M, M) to the real (..., 2M, 2M) block [[Re, -Im], [Im, Re]]."""
    top = T.concat([q.re, -q.im], axis=-1)
    bottom = T.concat([q.im, q.re], axis=-1)
    return T.concat([top, bottom], axis=-2)


def logdet_qqh(q):
    """log|det(Q Q^H)| per matrix, via det(real_embedding(Q)) = |det Q|^2."""
    return T.logabsdet(real_embedding(q))
