"""Loop-level reference implementations of the model's formulas, written
without numpy vectorization so they can check the library independently."""
import math

VEHICLE = ("small_vehicle", "big_vehicle")
WEIGHTS = {"vehicle": 0.20, "pedestrian": 0.58, "bicycle": 0.22}


def normalize_adjacency(a, alpha=0.001):
    n = len(a)
    deg = [sum(a[i][k] for k in range(n)) + alpha for i in range(n)]
    return [[a[i][j] / math.sqrt(deg[i]) / math.sqrt(deg[j]) for j in range(n)] for i in range(n)]


def graph_operation(f, g_fixed, g_train=None):
    """f[i][t][c]; g_fixed[t][k][i][j] for graphs k; g_train[k][i][j] or None."""
    n, t_h, C = len(f), len(f[0]), len(f[0][0])
    out = [[[0.0] * C for _ in range(t_h)] for _ in range(n)]
    for t in range(t_h):
        for k in range(len(g_fixed[t])):
            for i in range(n):
                for j in range(n):
                    g = g_fixed[t][k][i][j] + (g_train[k][i][j] if g_train else 0.0)
                    for c in range(C):
                        out[i][t][c] += g * f[j][t][c]
    return out


def _dist(p, q):
    return math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2)


def loss(pred, gt, mask):
    """pred[i][t] = (x, y); mean over steps with an observed agent of the
    mean distance over observed agents."""
    n, t_f = len(pred), len(pred[0])
    steps = []
    for t in range(t_f):
        d = [_dist(pred[i][t], gt[i][t]) for i in range(n) if mask[i][t]]
        if d:
            steps.append(sum(d) / len(d))
    return sum(steps) / len(steps) if steps else 0.0


def _cls(agent_type):
    if agent_type in VEHICLE:
        return "vehicle"
    if agent_type == "pedestrian":
        return "pedestrian"
    if agent_type == "motorcyclist_bicyclist":
        return "bicycle"
    return None


def metrics(pred, gt, types, mask):
    """Returns (rmse per step, ADE per class and all, FDE per class and all, WSADE, WSFDE)."""
    n, t_f = len(pred), len(pred[0])
    rmse = []
    for t in range(t_f):
        sq = [_dist(pred[i][t], gt[i][t]) ** 2 for i in range(n) if mask[i][t]]
        rmse.append(math.sqrt(sum(sq) / len(sq)) if sq else None)
    ade, fde = {}, {}
    for name in ("vehicle", "pedestrian", "bicycle", "all"):
        pts, fin = [], []
        for i in range(n):
            if name != "all" and _cls(types[i]) != name:
                continue
            for t in range(t_f):
                if mask[i][t]:
                    pts.append(_dist(pred[i][t], gt[i][t]))
            if mask[i][t_f - 1]:
                fin.append(_dist(pred[i][t_f - 1], gt[i][t_f - 1]))
        ade[name] = sum(pts) / len(pts) if pts else None
        fde[name] = sum(fin) / len(fin) if fin else None
    wsade = sum(w * ade[c] for c, w in WEIGHTS.items() if ade[c] is not None)
    wsfde = sum(w * fde[c] for c, w in WEIGHTS.items() if fde[c] is not None)
    return rmse, ade, fde, wsade, wsfde
