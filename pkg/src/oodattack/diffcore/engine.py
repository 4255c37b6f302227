"""Dense float64 tensors and a tape for reverse-mode differentiation.

The engine is deliberately small: enough primitives to train MLP-based
uncertainty heads and to pull loss gradients back to the *input* sample,
which is what the perturbation loop needs. Tapes are single-threaded;
tensors are immutable once created, so sharing them across tapes or
threads is safe.
"""

import numpy as np

LOG_FLOOR = 1e-12  # probabilities are clamped here before any log


class Tensor:
    """Immutable dense array of 64-bit floats.

    Construction validates finiteness, so a diverging computation fails at
    the op that produced the bad value instead of poisoning everything
    downstream.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def _wrap(cls, arr):
        # Internal fast path: arr is a freshly allocated float64 result.
        if not np.all(np.isfinite(arr)):
            raise ValueError("operation produced non-finite values")
        t = object.__new__(cls)
        arr.flags.writeable = False
        t.data = arr
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class Parameter:
    """Model weight: a value tensor, its gradient slot, and a trainable flag.

    Non-trainable parameters (frozen projections, kernel centroids) are
    skipped by the optimizer but still serialized with the model.
    """

    __slots__ = ("value", "grad", "trainable")

    def __init__(self, value, trainable: bool = True):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.grad = np.zeros(self.value.shape)
        self.trainable = trainable

    def assign(self, data) -> None:
        """Replace the value, keeping shape. Used by optimizer/EMA updates."""
        new = data if isinstance(data, Tensor) else Tensor(data)
        if new.shape != self.value.shape:
            raise ValueError(f"assign shape {new.shape} != {self.value.shape}")
        self.value = new


class Gradients:
    """Adjoints produced by one backward sweep, queryable per tensor.

    Tensors that never influenced the loss get a zero gradient of their
    own shape; identity (not value) keys the lookup.
    """

    def __init__(self, table):
        self._table = table

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._table.get(t)
        if g is None:
            return np.zeros(t.shape)
        return g

    def __contains__(self, t: Tensor) -> bool:
        return t in self._table


class Tape:
    """Ordered record of the primitive ops behind one computation.

    Ops append in execution order, so every input precedes its consumers;
    ``backward`` then walks the record once in reverse, accumulating exact
    adjoints. One tape per computation; independent tapes are independent.
    """

    def __init__(self):
        self._records = []  # (output, inputs tuple, vjp) in execution order

    def __len__(self):
        return len(self._records)

    def _push(self, out_arr, inputs, vjp) -> Tensor:
        out = Tensor._wrap(out_arr)
        self._records.append((out, inputs, vjp))
        return out

    # ---- arithmetic ------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; also accepts matrix + row-vector (bias) shapes."""
        if a.shape == b.shape:
            return self._push(a.data + b.data, (a, b), lambda g: (g, g))
        if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
            return self._push(a.data + b.data, (a, b),
                              lambda g: (g, g.sum(axis=0)))
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape == b.shape:
            return self._push(a.data - b.data, (a, b), lambda g: (g, -g))
        if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
            return self._push(a.data - b.data, (a, b),
                              lambda g: (g, -g.sum(axis=0)))
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        """Hadamard product of same-shape tensors."""
        if a.shape != b.shape:
            raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
        ad, bd = a.data, b.data
        return self._push(ad * bd, (a, b), lambda g: (g * bd, g * ad))

    def affine(self, a: Tensor, mul: float, add: float = 0.0) -> Tensor:
        """out = mul * a + add with scalar constants."""
        return self._push(a.data * mul + add, (a,), lambda g: (g * mul,))

    def scale(self, a: Tensor, c: float) -> Tensor:
        return self.affine(a, c, 0.0)

    def one_minus(self, a: Tensor) -> Tensor:
        return self.affine(a, -1.0, 1.0)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        """Matrix product of 2-D tensors with agreeing inner dimensions."""
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
        ad, bd = a.data, b.data
        return self._push(ad @ bd, (a, b),
                          lambda g: (g @ bd.T, ad.T @ g))

    # ---- elementwise nonlinearities -------------------------------------

    def relu(self, x: Tensor) -> Tensor:
        """max(0, x); gradient passes where x > 0 and is zero elsewhere."""
        mask = x.data > 0.0
        return self._push(np.where(mask, x.data, 0.0), (x,),
                          lambda g: (g * mask,))

    def exp(self, x: Tensor) -> Tensor:
        out = np.exp(x.data)
        return self._push(out, (x,), lambda g: (g * out,))

    def log(self, x: Tensor) -> Tensor:
        """Natural log with inputs clamped at LOG_FLOOR; below the floor the
        forward value is constant, so the gradient there is zero."""
        clamped = np.maximum(x.data, LOG_FLOOR)
        live = x.data >= LOG_FLOOR
        return self._push(np.log(clamped), (x,),
                          lambda g: (np.where(live, g / clamped, 0.0),))

    def cos(self, x: Tensor) -> Tensor:
        sin = np.sin(x.data)
        return self._push(np.cos(x.data), (x,), lambda g: (-g * sin,))

    def rsqrt(self, x: Tensor) -> Tensor:
        """x ** -0.5 for strictly positive x."""
        if np.any(x.data <= 0.0):
            raise ValueError("rsqrt requires strictly positive input")
        out = 1.0 / np.sqrt(x.data)
        cube = out ** 3
        return self._push(out, (x,), lambda g: (-0.5 * g * cube,))

    # ---- reductions and reshaping ----------------------------------------

    def sum(self, x: Tensor) -> Tensor:
        shape = x.shape
        return self._push(np.asarray(x.data.sum()), (x,),
                          lambda g: (np.broadcast_to(g, shape).copy(),))

    def mean(self, x: Tensor) -> Tensor:
        shape, n = x.shape, x.size
        return self._push(np.asarray(x.data.mean()), (x,),
                          lambda g: (np.broadcast_to(g / n, shape).copy(),))

    def sum_rows(self, x: Tensor) -> Tensor:
        """Row sums of a 2-D tensor, returned as a vector."""
        if x.ndim != 2:
            raise ValueError(f"sum_rows expects 2-D, got {x.shape}")
        cols = x.shape[1]
        return self._push(x.data.sum(axis=1), (x,),
                          lambda g: (np.repeat(g[:, None], cols, axis=1),))

    def scale_rows(self, x: Tensor, s: Tensor) -> Tensor:
        """Multiply each row of x by the matching entry of vector s."""
        if x.ndim != 2 or s.ndim != 1 or x.shape[0] != s.shape[0]:
            raise ValueError(f"scale_rows shape mismatch: {x.shape} vs {s.shape}")
        xd, sd = x.data, s.data
        return self._push(xd * sd[:, None], (x, s),
                          lambda g: (g * sd[:, None], (g * xd).sum(axis=1)))

    def stack_cols(self, cols) -> Tensor:
        """Stack equal-length vectors as the columns of a matrix."""
        cols = tuple(cols)
        if not cols:
            raise ValueError("stack_cols needs at least one column")
        n = cols[0].shape
        if any(c.ndim != 1 or c.shape != n for c in cols):
            raise ValueError("stack_cols requires equal-length 1-D tensors")
        out = np.stack([c.data for c in cols], axis=1)
        return self._push(out, cols,
                          lambda g: tuple(g[:, j] for j in range(len(cols))))

    # ---- distances and kernels -------------------------------------------

    def sqdist(self, a: Tensor, b: Tensor) -> Tensor:
        """Squared euclidean distance between two vectors (scalar output)."""
        if a.ndim != 1 or a.shape != b.shape:
            raise ValueError(f"sqdist shape mismatch: {a.shape} vs {b.shape}")
        diff = a.data - b.data
        return self._push(np.asarray(diff @ diff), (a, b),
                          lambda g: (2.0 * g * diff, -2.0 * g * diff))

    def sqdist_rows(self, a: Tensor, b: Tensor) -> Tensor:
        """Squared distance from each row of a to the vector b."""
        if a.ndim != 2 or b.ndim != 1 or a.shape[1] != b.shape[0]:
            raise ValueError(f"sqdist_rows shape mismatch: {a.shape} vs {b.shape}")
        diff = a.data - b.data
        return self._push((diff * diff).sum(axis=1), (a, b),
                          lambda g: (2.0 * g[:, None] * diff,
                                     -2.0 * (g[:, None] * diff).sum(axis=0)))

    def rbf_kernel(self, a: Tensor, b: Tensor, sigma: float) -> Tensor:
        """exp(-||a - b||^2 / (2 sigma^2)), in (0, 1], differentiable in a."""
        if sigma <= 0.0:
            raise ValueError(f"rbf_kernel requires sigma > 0, got {sigma}")
        d2 = self.sqdist(a, b)
        return self.exp(self.scale(d2, -0.5 / (sigma * sigma)))

    # ---- probability ops --------------------------------------------------

    def softmax(self, z: Tensor) -> Tensor:
        """Row-wise softmax, stabilized by max subtraction.

        Accepts a vector or a matrix of row logits; outputs are in (0, 1]
        and each row sums to one.
        """
        if z.shape[-1] < 1:
            raise ValueError("softmax needs at least one class")
        shifted = z.data - z.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=-1, keepdims=True)

        def vjp(g):
            inner = (g * s).sum(axis=-1, keepdims=True)
            return (s * (g - inner),)

        return self._push(s, (z,), vjp)

    def cross_entropy(self, p: Tensor, y: int) -> Tensor:
        """-log p[y] for a single confidence vector, clamped at LOG_FLOOR."""
        if p.ndim != 1:
            raise ValueError(f"cross_entropy expects a vector, got {p.shape}")
        if not 0 <= y < p.shape[0]:
            raise ValueError(f"label {y} outside [0, {p.shape[0]})")
        clamped = max(float(p.data[y]), LOG_FLOOR)
        live = p.data[y] >= LOG_FLOOR

        def vjp(g):
            grad = np.zeros(p.shape)
            if live:
                grad[y] = -g / clamped
            return (grad,)

        return self._push(np.asarray(-np.log(clamped)), (p,), vjp)

    def cross_entropy_batch(self, p: Tensor, y: np.ndarray) -> Tensor:
        """Mean of -log p[i, y_i] over the rows of a confidence matrix."""
        y = np.asarray(y)
        if p.ndim != 2 or y.shape != (p.shape[0],):
            raise ValueError(f"cross_entropy_batch shapes: {p.shape} vs {y.shape}")
        if y.min() < 0 or y.max() >= p.shape[1]:
            raise ValueError(f"labels outside [0, {p.shape[1]})")
        n = p.shape[0]
        rows = np.arange(n)
        picked = p.data[rows, y]
        clamped = np.maximum(picked, LOG_FLOOR)
        live = picked >= LOG_FLOOR

        def vjp(g):
            grad = np.zeros(p.shape)
            grad[rows, y] = np.where(live, -g / (n * clamped), 0.0)
            return (grad,)

        return self._push(np.asarray(-np.log(clamped).mean()), (p,), vjp)

    # ---- reverse sweep ----------------------------------------------------

    def backward(self, loss: Tensor) -> Gradients:
        """Accumulate adjoints of a scalar loss for every tensor on the tape.

        Visits each recorded op exactly once, in reverse execution order.
        May be called repeatedly with different scalars from the same tape;
        sweeps are independent.
        """
        if loss.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
        adjoint = {loss: np.ones(())}
        for out, inputs, vjp in reversed(self._records):
            g = adjoint.get(out)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                have = adjoint.get(inp)
                adjoint[inp] = gi if have is None else have + gi
        return Gradients(adjoint)
