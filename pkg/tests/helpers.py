"""Shared test utilities: synthetic datasets and independent oracles.

Every oracle here is deliberately implemented through a different route
than the library code it checks (truncated series, exhaustive enumeration,
long-run first-order methods, characteristic polynomials), so agreement is
evidence rather than tautology.
"""

import itertools

import numpy as np


def make_blobs(seed, n_per=50, informative=10, noise=90, side=12.0, within=0.4, scale=7.0):
    """Three Gaussian blobs with informative and pure-noise features.

    The three centers form an exact equilateral triangle embedded in a
    2-D plane whose basis loads every informative coordinate with equal
    magnitude (half-period cosine/sine pattern), so each informative
    feature carries the same share of the cluster structure. Columns are
    standardized and then scaled by a common factor.
    """
    rng = np.random.default_rng(seed)
    j = np.arange(informative)
    phase = rng.uniform(0, 2 * np.pi)
    angles = np.pi * j / informative + phase
    u1 = np.cos(angles) / np.sqrt(informative / 2)
    u2 = np.sin(angles) / np.sqrt(informative / 2)
    centers = np.stack([0 * u1, side * u1, side / 2 * u1 + side * np.sqrt(3) / 2 * u2])
    blocks = []
    for b in range(3):
        informative_block = centers[b] + within * rng.normal(size=(n_per, informative))
        noise_block = rng.normal(size=(n_per, noise))
        blocks.append(np.hstack([informative_block, noise_block]))
    X = np.vstack(blocks)
    labels = np.repeat(np.arange(3), n_per)
    order = rng.permutation(len(labels))
    X, labels = X[order], labels[order]
    X = scale * (X - X.mean(axis=0)) / X.std(axis=0)
    return X, labels


def random_graph_laplacian(rng, n):
    """Normalized Laplacian of a random-point kNN graph, for filter tests."""
    from gfsel import build_knn_graph, median_bandwidth, normalized_laplacian

    points = rng.normal(size=(n, 3))
    graph = build_knn_graph(points, k=min(4, n - 1), delta=median_bandwidth(points))
    laplacian, _ = normalized_laplacian(graph)
    return laplacian


def taylor_heat_kernel(L, eta, terms=30):
    """Truncated series sum_{t<=terms} (-eta)^t L^t / t!."""
    n = L.shape[0]
    total = np.eye(n)
    term = np.eye(n)
    for t in range(1, terms + 1):
        term = term @ L * (-eta / t)
        total = total + term
    return total


def simplex_projection_oracle(v):
    """Exhaustive active-set solution of min ||x - v|| over the simplex.

    Enumerates every nonempty support, solves the equality-constrained
    projection on it, and keeps the feasible candidate closest to v.
    """
    v = np.asarray(v, dtype=np.float64)
    best = None
    best_dist = np.inf
    for size in range(1, v.size + 1):
        for support in itertools.combinations(range(v.size), size):
            candidate = np.zeros_like(v)
            idx = list(support)
            shift = (1.0 - v[idx].sum()) / size
            candidate[idx] = v[idx] + shift
            if np.min(candidate[idx]) < 0:
                continue
            dist = float(np.sum((candidate - v) ** 2))
            if dist < best_dist:
                best_dist = dist
                best = candidate
    return best


def projected_gradient_oracle(prob, z0, steps=100_000):
    """Long-run projected gradient descent on the row-stochastic QP.

    Diminishing step sizes below the inverse Lipschitz constant. Stops
    early only at an exact fixed point, where the projected-gradient
    characterization of optimality makes further steps no-ops.
    """
    from gfsel import project_simplex_rows

    D = prob.dvec
    C = prob.C
    E = prob.E
    alpha = prob.alpha
    lipschitz = 2.0 * (float(D.max()) * float(np.linalg.eigvalsh(C).max()) + alpha)
    base = 1.0 / lipschitz
    Z = np.array(z0, dtype=np.float64, copy=True)
    for k in range(steps):
        gradient = 2.0 * ((D[:, None] * Z) @ C + alpha * Z - E)
        step = base * (1000.0 / (1000.0 + k))
        updated = project_simplex_rows(Z - step * gradient)
        if np.max(np.abs(updated - Z)) <= 1e-16:
            return updated
        Z = updated
    return Z


def random_z_subproblem(rng, n, d=12, c=3):
    """Random row-stochastic QP instance of the kind the solver produces."""
    from gfsel import ZSubproblem, project_simplex_rows

    Xbar = rng.normal(size=(n, d))
    W, _ = np.linalg.qr(rng.normal(size=(d, c)))
    dvec = 1.0 / (2.0 * rng.uniform(0.1, 2.0, size=n))
    alpha = float(rng.uniform(0.1, 5.0))
    prior = project_simplex_rows(rng.normal(size=(n, n)))
    prob = ZSubproblem.from_parts(Xbar, W, dvec, alpha, prior)
    z0 = project_simplex_rows(rng.normal(size=(n, n)))
    return prob, z0


def accuracy_bruteforce(pred, truth):
    """Best matching accuracy by enumerating all label permutations."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    pred_values = np.unique(pred)
    truth_values = np.unique(truth)
    size = max(pred_values.size, truth_values.size)
    table = np.zeros((size, size), dtype=np.int64)
    for p, t in zip(pred, truth):
        table[np.searchsorted(pred_values, p), np.searchsorted(truth_values, t)] += 1
    best = 0
    for perm in itertools.permutations(range(size)):
        best = max(best, sum(table[i, perm[i]] for i in range(size)))
    return best / pred.size


def charpoly_eigenvalues(M):
    """Eigenvalues via Faddeev-LeVerrier characteristic polynomial + roots.

    Independent of the LAPACK symmetric eigensolver: the coefficients come
    from trace recursions, the roots from the companion matrix.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    Mk = np.zeros_like(M)
    for k in range(1, n + 1):
        Mk = M @ Mk + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(M @ Mk) / k
    roots = np.roots(coeffs)
    return np.sort(roots.real)
