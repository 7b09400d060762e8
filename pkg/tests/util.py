"""Independent oracles shared by the test modules.

Everything here is written as plain scalar loops or brute force so test
expectations never reuse the library's own vectorised code paths.
"""

import numpy as np


def same_pads(k):
    # length-preserving padding; the extra element for even kernels goes left
    left = k - 1 - ((k - 1) // 2)
    right = (k - 1) // 2
    return left, right


def conv1d_oracle(x, w, bias):
    """Scalar-loop 1-D convolution, same padding. x (B,C,L), w (F,C,K)."""
    B, C, L = x.shape
    F, _, K = w.shape
    pl, pr = same_pads(K)
    xp = np.zeros((B, C, L + pl + pr), dtype=x.dtype)
    xp[:, :, pl:pl + L] = x
    out = np.zeros((B, F, L), dtype=x.dtype)
    for b in range(B):
        for f in range(F):
            for i in range(L):
                acc = 0.0
                for c in range(C):
                    for k in range(K):
                        acc += w[f, c, k] * xp[b, c, i + k]
                out[b, f, i] = acc + bias[f]
    return out


def conv2d_oracle(x, w, bias, pad_h="same", pad_w="same"):
    """Scalar-loop 2-D convolution. x (B,C,H,W), w (F,C,KH,KW)."""
    B, C, H, W = x.shape
    F, _, KH, KW = w.shape
    pt, pb = same_pads(KH) if pad_h == "same" else (0, 0)
    pl, pr = same_pads(KW) if pad_w == "same" else (0, 0)
    OH = H + pt + pb - KH + 1
    OW = W + pl + pr - KW + 1
    xp = np.zeros((B, C, H + pt + pb, W + pl + pr), dtype=x.dtype)
    xp[:, :, pt:pt + H, pl:pl + W] = x
    out = np.zeros((B, F, OH, OW), dtype=x.dtype)
    for b in range(B):
        for f in range(F):
            for i in range(OH):
                for j in range(OW):
                    acc = 0.0
                    for c in range(C):
                        for ki in range(KH):
                            for kj in range(KW):
                                acc += w[f, c, ki, kj] * xp[b, c, i + ki, j + kj]
                    out[b, f, i, j] = acc + bias[f]
    return out


def rank_oracle(scores, gold_index, tie_policy):
    """Sort-based ranking oracle: positions of the gold score in a full sort."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    positions = [pos + 1 for pos, idx in enumerate(order)
                 if scores[idx] == scores[gold_index]]
    if tie_policy == "optimistic":
        return positions[0]
    if tie_policy == "pessimistic":
        return positions[-1]
    return sum(positions) / len(positions)


class ScalarAdam:
    """Reference single-value Adam, written without arrays."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = 0.0
        self.v = 0.0
        self.t = 0

    def step(self, x, g):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def softmax_oracle(vec):
    e = np.exp(np.asarray(vec, dtype=np.float64))
    return e / e.sum()


def gradcheck_cases():
    """(label, fn, x) triples covering every primitive and operand slot.

    Inputs that feed non-smooth points (relu, 1-norm) are drawn with
    |x| >= 0.2 so the central-difference step never crosses a kink.  Most
    outputs are weighted sums against a fixed random tensor so uniform
    gradients cannot mask indexing bugs.
    """
    from nase import tensor as T

    rng = np.random.default_rng(42)

    def c(*shape):
        return T.Tensor(rng.uniform(-1.0, 1.0, size=shape))

    def away(*shape):
        mag = rng.uniform(0.2, 1.0, size=shape)
        sgn = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
        return T.Tensor(mag * sgn)

    cases = []
    w23 = c(2, 3)
    b23 = c(2, 3)
    cases.append(("add_lhs", lambda x: T.tsum(T.mul(T.add(x, b23), w23)), c(2, 3)))
    cases.append(("add_rhs", lambda x: T.tsum(T.mul(T.add(b23, x), w23)), c(2, 3)))
    cases.append(("add_scalar_operand", lambda x: T.tsum(T.mul(T.add(b23, x), w23)), c()))
    cases.append(("sub_lhs", lambda x: T.tsum(T.mul(T.sub(x, b23), w23)), c(2, 3)))
    cases.append(("sub_rhs", lambda x: T.tsum(T.mul(T.sub(b23, x), w23)), c(2, 3)))
    cases.append(("mul_lhs", lambda x: T.tsum(T.mul(T.mul(x, b23), w23)), c(2, 3)))
    cases.append(("mul_rhs", lambda x: T.tsum(T.mul(T.mul(b23, x), w23)), c(2, 3)))
    cases.append(("scalar_affine", lambda x: T.tsum(T.mul(T.scalar_affine(x, 1.7, -0.3), w23)), c(2, 3)))
    cases.append(("relu", lambda x: T.tsum(T.mul(T.relu(x), w23)), away(2, 3)))
    cases.append(("sigmoid", lambda x: T.tsum(T.mul(T.sigmoid(x), w23)), c(2, 3)))
    cases.append(("softplus", lambda x: T.tsum(T.mul(T.softplus(x), w23)), c(2, 3)))
    w24 = c(2, 4)
    cases.append(("softmax", lambda x: T.tsum(T.mul(T.softmax(x), w24)), c(2, 4)))
    w34 = c(3, 4)
    cases.append(("reshape", lambda x: T.tsum(T.mul(T.reshape(x, (3, 4)), w34)), c(2, 6)))
    w29 = c(2, 9)
    mid = c(2, 3)
    cases.append(("concat_repeated_operand",
                  lambda x: T.tsum(T.mul(T.concat([x, mid, x], axis=1), w29)), c(2, 3)))
    idx = np.array([0, 2, 2, 4])
    w43 = c(4, 3)
    cases.append(("gather", lambda x: T.tsum(T.mul(T.gather(x, idx), w43)), c(5, 3)))
    m34 = c(3, 4)
    m23 = c(2, 3)
    wm = c(2, 4)
    cases.append(("matmul_lhs", lambda x: T.tsum(T.mul(T.matmul(x, m34), wm)), c(2, 3)))
    cases.append(("matmul_rhs", lambda x: T.tsum(T.mul(T.matmul(m23, x), wm)), c(3, 4)))
    v23 = c(2, 3)
    mm = c(2, 3, 3)
    wv = c(2, 3)
    cases.append(("matvec_rows_mats", lambda x: T.tsum(T.mul(T.matvec_rows(x, v23), wv)), c(2, 3, 3)))
    cases.append(("matvec_rows_vecs", lambda x: T.tsum(T.mul(T.matvec_rows(mm, x), wv)), c(2, 3)))
    s21 = c(2, 1)
    x23 = c(2, 3)
    cases.append(("scale_rows_x", lambda x: T.tsum(T.mul(T.scale_rows(x, s21), w23)), c(2, 3)))
    cases.append(("scale_rows_s", lambda x: T.tsum(T.mul(T.scale_rows(x23, x), w23)), c(2, 1)))
    v3 = c(3)
    cases.append(("add_bias_x", lambda x: T.tsum(T.mul(T.add_bias(x, v3), w23)), c(2, 3)))
    cases.append(("add_bias_v", lambda x: T.tsum(T.mul(T.add_bias(x23, x), w23)), c(3)))
    cases.append(("sum_all", lambda x: T.tsum(x), c(2, 3)))
    w3 = c(3)
    cases.append(("sum_axis", lambda x: T.tsum(T.mul(T.tsum(x, axis=0), w3)), c(2, 3)))
    cases.append(("mean_all", lambda x: T.tmean(x), c(2, 3)))
    w2 = c(2)
    cases.append(("mean_axis", lambda x: T.tsum(T.mul(T.tmean(x, axis=1), w2)), c(2, 3)))
    cases.append(("pnorm_p1", lambda x: T.tsum(T.mul(T.pnorm(x, 1), w2)), away(2, 3)))
    cases.append(("pnorm_p2", lambda x: T.tsum(T.mul(T.pnorm(x, 2), w2)), away(2, 3)))
    cx = c(2, 2, 5)
    cw = c(3, 2, 2)
    cb = c(3)
    wc1 = c(2, 3, 5)
    cases.append(("conv1d_same_x", lambda x: T.tsum(T.mul(T.conv1d_same(x, cw, cb), wc1)), c(2, 2, 5)))
    cases.append(("conv1d_same_w", lambda x: T.tsum(T.mul(T.conv1d_same(cx, x, cb), wc1)), c(3, 2, 2)))
    cases.append(("conv1d_same_bias", lambda x: T.tsum(T.mul(T.conv1d_same(cx, cw, x), wc1)), c(3)))
    dx = c(2, 1, 4, 4)
    dw = c(2, 1, 3, 3)
    db = c(2)
    wc2 = c(2, 2, 4, 4)
    cases.append(("conv2d_same_x", lambda x: T.tsum(T.mul(T.conv2d(x, dw, db), wc2)), c(2, 1, 4, 4)))
    cases.append(("conv2d_same_w", lambda x: T.tsum(T.mul(T.conv2d(dx, x, db), wc2)), c(2, 1, 3, 3)))
    cases.append(("conv2d_same_bias", lambda x: T.tsum(T.mul(T.conv2d(dx, dw, x), wc2)), c(2)))
    vx = c(2, 1, 3, 5)
    vw2 = c(2, 1, 3, 3)
    vb = c(2)
    wcv = c(2, 2, 1, 5)
    cases.append(("conv2d_valid_h_x",
                  lambda x: T.tsum(T.mul(T.conv2d(x, vw2, vb, pad_h="valid"), wcv)), c(2, 1, 3, 5)))
    cases.append(("conv2d_valid_h_w",
                  lambda x: T.tsum(T.mul(T.conv2d(vx, x, vb, pad_h="valid"), wcv)), c(2, 1, 3, 3)))
    return cases
