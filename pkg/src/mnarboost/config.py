"""Flat ``key = value`` configuration with sections.

``[boost]\\neta_stop = 1e-6`` is addressed as ``boost.eta_stop``.  Command
line flags override file values, which override the defaults below.
"""

from __future__ import annotations

import configparser
from typing import Mapping, Optional

DEFAULTS = {
    "boost.eta_stop": "1e-6",
    "boost.max_iter": "1000",
    "boost.alpha_max": "50",
    "boost.line_tol": "1e-10",
    "boost.init": "ccmean",
    "spline.order": "2",
    "spline.num_basis": "3",
    "spline.ridge": "1e-8",
    "adj.pi_floor": "1e-3",
    "adj.ny": "20",
    "adj.bj_seed": "0",
    "ee.tol": "1e-8",
    "ee.max_iter": "200",
    "ee.restarts": "5",
    "ee.jacobian_step": "1e-5",
    "ee.estar": "auto",
    "ee.seed": "0",
    "ee.covariates": "all",
    "density.terms": "linear",
    "density.groups": "",
    "density.select": "none",
    "loss.huber_q": "50",
    "bench.settings": "1",
    "bench.scenarios": "mnar",
    "bench.methods": "R,N,IPW,IPWN,BJ",
    "bench.losses": "l2",
    "bench.n": "1000",
    "bench.seed": "0",
}


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, object]] = None) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg[f"{section}.{key}"] = value.strip()
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = str(value)
    return cfg


def split_list(value: str) -> list:
    return [v.strip() for v in str(value).split(",") if v.strip()]
