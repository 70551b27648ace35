import json

import numpy as np
import pytest

from parastrat.parahoric import ParahoricContext
from parastrat.isoflow import balanced_flow_state


def cnum(z):
    z = complex(z)
    return [z.real, z.imag]


def cmat(m):
    return [[cnum(v) for v in row] for row in np.asarray(m)]


def flow_config(seed, xi, a, waypoints, steps, n=2, residual_ceiling=1e-6,
                record_two_form=True, extra=None):
    """Config dict for a balanced slope-1/n instance with the given data."""
    rng = np.random.default_rng(seed)
    ctx = ParahoricContext(n, n)
    st = balanced_flow_state(ctx, list(xi), np.array(a, dtype=complex), rng)
    cfg = {
        "version": 1, "n": n, "nu": "dz", "seed": seed, "depth": 12, "tol": 1e-10,
        "points": [
            {"xi": cnum(st.xi[i]), "e": n, "r": 1,
             "framing": cmat(st.g[i]),
             "alpha_principal_part": {
                 "-2": cmat(-(st.a[i] / n) * st.corner_frame(i)),
                 "-1": cmat(st.R[i])}}
            for i in range(st.m)
        ],
        "flow": {"waypoints": [[cnum(z) for z in w] for w in waypoints],
                 "steps": steps, "residual_ceiling": residual_ceiling,
                 "record_two_form": record_two_form},
    }
    if extra:
        cfg.update(extra)
    return cfg


@pytest.fixture
def write_config(tmp_path):
    def _write(cfg, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(cfg, indent=1), encoding="utf-8")
        return str(path)
    return _write
