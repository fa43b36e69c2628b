"""Batch pipeline: ground state -> perturb/evolve -> spectrum.

Each stage reads the JSON config, consumes the previous stage's checkpoint,
and writes its artifacts atomically into ``output_dir``. Stages are
deterministic for a fixed config and seed, so re-runs produce byte-identical
CSV files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .config import RunConfig, build_model, parse_config, perturbation_matrix
from .environment import compute_environment
from .errors import ConfigError, IbcError
from .groundstate import ItebdSchedule, itebd_ground_state, two_site_energy
from .imps import BOND_LABELS, InfiniteMps
from .observables import (
    SpaceTimeRecord,
    extract_dispersion,
    greens_function,
    spectral_function,
    sz_profile,
    unequal_time_correlator,
)
from .tensor import DenseTensor
from .window import (
    WindowState,
    apply_local_operator,
    build_trotter_plan,
    expand_window,
    open_window,
    tebd_step,
    window_energy,
)

ORDER4_NOTE = "real-coefficient fractal of five second-order kernels"
E_REF_NOTE = "phase reference is the window effective energy <phi|H|phi>"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _write_text_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: str, rows) -> None:
    lines = [header]
    lines += [",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row)
              for row in rows]
    _write_text_atomic(path, "\n".join(lines) + "\n")


def _log(msg: str):
    print(msg, flush=True)


# ---------------------------------------------------------------- stages


def stage_gs(cfg: RunConfig) -> dict:
    ops, h2, mpo = build_model(cfg.model)
    schedule = ItebdSchedule(steps=cfg.itebd_schedule, chi=cfg.chi,
                             energy_tol=cfg.energy_tol)
    _log(f"[gs] model={cfg.model.name} chi={cfg.chi} stages={len(schedule.steps)}")
    psi = itebd_ground_state(h2, schedule, seed=cfg.seed)
    if psi.d != ops.d:
        _log(f"[gs] warning: converged state has a blocked unit cell (d={psi.d})")
        e0 = float("nan")
    else:
        e0 = two_site_energy(psi, h2)
    _log(f"[gs] done: chi={psi.chi} d={psi.d} e0={e0:.12f}")
    path = os.path.join(cfg.output_dir, "gs.ckpt")
    write_checkpoint(path, {
        "gamma": psi.gamma,
        "lambda": DenseTensor(("bond",), psi.lam.astype(np.complex128)),
    }, {
        "stage": "gs", "config_hash": cfg.config_hash(),
        "d": psi.d, "chi": psi.chi, "e0": e0, "seed": cfg.seed,
    })
    _log(f"[gs] wrote {path}")
    return {"e0": e0, "checkpoint": path}


def _load_ground_state(cfg: RunConfig) -> tuple[InfiniteMps, float]:
    path = os.path.join(cfg.output_dir, "gs.ckpt")
    if not os.path.exists(path):
        raise ConfigError(f"missing ground-state checkpoint {path}; run the gs stage")
    tensors, meta = read_checkpoint(path)
    lam = tensors["lambda"].data.real
    psi = InfiniteMps(gamma=tensors["gamma"].permuted(BOND_LABELS),
                      lam=lam, d=meta["d"], chi=meta["chi"])
    return psi, float(meta["e0"])


def _open_ground_window(cfg: RunConfig, psi: InfiniteMps, mpo) -> WindowState:
    w = open_window(psi, cfg.window_size, mpo, chi_max=cfg.chi_max,
                    svd_tol=cfg.svd_tol, env_tol=cfg.env_tol)
    w.alarm_threshold = cfg.alarm_threshold
    return w


def stage_evolve(cfg: RunConfig) -> dict:
    ops, h2, mpo = build_model(cfg.model)
    psi, e0 = _load_ground_state(cfg)
    if psi.d != mpo.d:
        raise ConfigError("ground-state checkpoint has a blocked unit cell; "
                          "the evolve stage needs a one-site state")
    ground = _open_ground_window(cfg, psi, mpo)
    e_ref = window_energy(ground)
    flip = cfg.flip_site
    op = perturbation_matrix(ops, cfg.perturbation_operator)
    state = apply_local_operator(ground, flip, op)
    _log(f"[evolve] N={cfg.window_size} flip={cfg.perturbation_operator}@{flip} "
         f"norm={abs(state.amplitude):.12f} e_ref={e_ref:.12f}")

    n_steps = int(round(cfg.t_max / cfg.dt)) if cfg.t_max > 0 else 0
    plan = build_trotter_plan(cfg.trotter_order, cfg.dt, cfg.window_size) \
        if n_steps else None
    positions = np.arange(1, cfg.window_size + 1) - flip

    times, profiles, corrs = [], [], []

    def measure(w):
        times.append(w.time)
        profiles.append(sz_profile(w))
        corrs.append(unequal_time_correlator(ground, w, e_ref))

    measure(state)
    for k in range(1, n_steps + 1):
        state = tebd_step(state, plan)
        if k % cfg.measure_every == 0:
            measure(state)
        energy = window_energy(state)
        _log(f"[evolve] t={state.time:.4f} dw={state.last_step_discarded:.3e} "
             f"E={energy:.10f} chi_max={state.max_bond}")
        if cfg.checkpoint_every and k % cfg.checkpoint_every == 0 and k < n_steps:
            _write_window_checkpoint(cfg, state, e_ref, flip,
                                     name=f"window_step{k:06d}.ckpt")

    record = SpaceTimeRecord(times=np.array(times), positions=positions,
                             values=np.array(corrs))
    greens = greens_function(record)

    prof_rows = [(float(t), int(x), float(p[i]))
                 for t, p in zip(times, profiles)
                 for i, x in enumerate(positions)]
    _write_csv(os.path.join(cfg.output_dir, "sz_profile.csv"), "t,x,sz", prof_rows)
    g_rows = [(float(t), int(x), float(greens.values[it, ix].real),
               float(greens.values[it, ix].imag))
              for it, t in enumerate(times) for ix, x in enumerate(positions)]
    _write_csv(os.path.join(cfg.output_dir, "greens.csv"), "t,x,re_g,im_g", g_rows)
    path = _write_window_checkpoint(cfg, state, e_ref, flip, name="window.ckpt")
    _log(f"[evolve] wrote {path} and CSV artifacts")
    return {"checkpoint": path, "e_ref": e_ref}


def _write_window_checkpoint(cfg, w: WindowState, e_ref: float, flip: int,
                             name: str) -> str:
    tensors = {f"site_{i:06d}": DenseTensor(BOND_LABELS, t)
               for i, t in enumerate(w.tensors)}
    tensors["center"] = DenseTensor(("bra", "ket"), w.center)
    path = os.path.join(cfg.output_dir, name)
    write_checkpoint(path, tensors, {
        "stage": "evolve", "config_hash": cfg.config_hash(),
        "n_sites": w.n_sites, "ortho_position": w.ortho_position,
        "time": w.time, "amplitude": [w.amplitude.real, w.amplitude.imag],
        "accumulated_discarded_weight": w.accumulated_discarded_weight,
        "e_ref": e_ref, "e0": w.left_env.e0, "flip_site": flip,
        "chi_max": w.chi_max, "trotter_order4": ORDER4_NOTE,
    })
    return path


def _load_window(cfg: RunConfig, name: str = "window.ckpt"):
    path = os.path.join(cfg.output_dir, name)
    if not os.path.exists(path):
        raise ConfigError(f"missing window checkpoint {path}; run the evolve stage")
    tensors, meta = read_checkpoint(path)
    ops, h2, mpo = build_model(cfg.model)
    psi, _ = _load_ground_state(cfg)
    left_env = compute_environment(psi, mpo, "left", tol=cfg.env_tol)
    right_env = compute_environment(psi, mpo, "right", tol=cfg.env_tol)
    n = meta["n_sites"]
    w = WindowState(
        tensors=[tensors[f"site_{i:06d}"].data for i in range(n)],
        center=tensors["center"].data,
        ortho_position=meta["ortho_position"],
        left_env=left_env, right_env=right_env, mpo=mpo,
        chi_max=meta["chi_max"], svd_tol=cfg.svd_tol,
        accumulated_discarded_weight=meta["accumulated_discarded_weight"],
        time=meta["time"],
        amplitude=complex(meta["amplitude"][0], meta["amplitude"][1]),
        alarm_threshold=cfg.alarm_threshold,
    )
    return w, meta, psi


def stage_spectrum(cfg: RunConfig) -> dict:
    path = os.path.join(cfg.output_dir, "greens.csv")
    if not os.path.exists(path):
        raise ConfigError(f"missing {path}; run the evolve stage")
    record = _read_greens_csv(path)
    q = np.linspace(0.0, np.pi, cfg.q_points)
    omega = np.linspace(0.0, cfg.omega_max, cfg.omega_points)
    t_window = min(cfg.effective_t_window, float(record.times[-1]))
    grid = spectral_function(record, q, omega, t_window)
    disp = extract_dispersion(grid)

    s_rows = [(float(q[iq]), float(omega[iw]), float(grid.s[iq, iw]))
              for iq in range(len(q)) for iw in range(len(omega))]
    _write_csv(os.path.join(cfg.output_dir, "spectral.csv"), "q,omega,s", s_rows)
    d_rows = [(float(qv), float(wv)) for qv, wv in disp.points]
    _write_csv(os.path.join(cfg.output_dir, "dispersion.csv"), "q,omega_peak", d_rows)
    qs = np.array([p[0] for p in disp.points])
    q_gap = float(qs[int(np.argmin(np.abs(qs - np.pi)))])
    meta = {
        "gap": disp.gap, "q_at_gap": q_gap, "t_window": t_window,
        "e_ref_convention": E_REF_NOTE, "trotter_order4": ORDER4_NOTE,
        "excluded_q": list(disp.excluded_q),
    }
    _write_text_atomic(os.path.join(cfg.output_dir, "spectrum_meta.json"),
                       json.dumps(meta, sort_keys=True, indent=1) + "\n")
    _log(f"[spectrum] gap at q={q_gap:.6f}: {disp.gap:.6f}")
    return meta


def _read_greens_csv(path: str) -> SpaceTimeRecord:
    with open(path) as f:
        header = f.readline().strip()
        if header != "t,x,re_g,im_g":
            raise ConfigError(f"{path}: unexpected header {header!r}")
        data = {}
        for line in f:
            t_s, x_s, re_s, im_s = line.strip().split(",")
            data[(float(t_s), int(x_s))] = float(re_s) + 1j * float(im_s)
    times = np.array(sorted({t for t, _ in data}))
    positions = np.array(sorted({x for _, x in data}))
    values = np.empty((len(times), len(positions)), dtype=np.complex128)
    try:
        for it, t in enumerate(times):
            for ix, x in enumerate(positions):
                values[it, ix] = data[(t, int(x))]
    except KeyError:
        raise ConfigError(f"{path}: incomplete (time x position) grid") from None
    return SpaceTimeRecord(times=times, positions=positions, values=values)


def stage_expand(cfg: RunConfig, left: int, right: int) -> dict:
    w, meta, psi = _load_window(cfg)
    expanded = expand_window(w, left, right, psi)
    flip = meta["flip_site"] + left
    positions = np.arange(1, expanded.n_sites + 1) - flip
    prof = sz_profile(expanded)
    rows = [(float(expanded.time), int(x), float(prof[i]))
            for i, x in enumerate(positions)]
    _write_csv(os.path.join(cfg.output_dir, "sz_profile_expanded.csv"), "t,x,sz", rows)
    path = _write_window_checkpoint(cfg, expanded, meta["e_ref"], flip,
                                    name="window_expanded.ckpt")
    _log(f"[expand] N {w.n_sites} -> {expanded.n_sites}; wrote {path}")
    return {"checkpoint": path}


def run_pipeline(cfg: RunConfig, stage: str, expand_left: int = 0,
                 expand_right: int = 0) -> dict:
    os.makedirs(cfg.output_dir, exist_ok=True)
    if stage == "gs":
        return stage_gs(cfg)
    if stage == "evolve":
        return stage_evolve(cfg)
    if stage == "spectrum":
        return stage_spectrum(cfg)
    if stage == "expand":
        return stage_expand(cfg, expand_left, expand_right)
    raise ConfigError(f"unknown stage {stage!r}")


def _limit_blas_threads():
    # small dense factorizations dominate; oversubscribed BLAS threads hurt
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:
        pass


def main(argv=None) -> int:
    _limit_blas_threads()
    parser = argparse.ArgumentParser(
        prog="ibcmps",
        description="Spin-chain dynamics in a window with infinite boundaries",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in ("gs", "evolve", "spectrum", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the JSON run configuration")
    p = sub.add_parser("expand")
    p.add_argument("config")
    p.add_argument("--left", type=int, default=0)
    p.add_argument("--right", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        with open(args.config) as f:
            cfg = parse_config(f.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.stage == "validate":
        print(cfg.canonical_json())
        return 0
    try:
        run_pipeline(cfg, args.stage,
                     expand_left=getattr(args, "left", 0),
                     expand_right=getattr(args, "right", 0))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except IbcError as exc:
        print(f"numerical failure in stage {args.stage}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
