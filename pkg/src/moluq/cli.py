"""Command-line pipeline: sample ensembles, evaluate QOIs, certify, bound.

Every subcommand reads a JSON run config (flags override the common fields),
writes its documented output files into --out, and drops a metadata sidecar
(<command>_meta.json) containing the fully resolved configuration.  Feeding a
sidecar to ``moluq replay`` re-runs the exact command; outputs are
byte-deterministic given (inputs, seed).

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical or
domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

import moluq
from moluq import bindsite, bounds, certificates, conformers, molio, qoi, vizgrid

DEFAULTS = {
    "seed": 0,
    "samples": None,
    "mode": "cartesian",
    "clash_factor": 0.6,
    "fixed_chains": [],
    "qoi": ["area", "volume", "lj", "coulomb", "gb"],
    "chain_a": None,
    "chain_b": None,
    "probe": 1.4,
    "n_points": 960,
    "spacing": 0.5,
    "dielectric": {"mode": "constant", "value": 1.0},
    "solvent_dielectric": 80.0,
    "t_grid": list(certificates.DEFAULT_T_GRID),
    "tau": 0.05,
    "saturation_mode": "incremental",
    "contact_cutoff": 5.0,
    "workers": 1,
}


class UsageError(Exception):
    pass


class DataFormatError(ValueError):
    """Malformed tabular input (value streams, pose files)."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _load_json(path: str):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"input file not found: {path}")
    return json.loads(p.read_text())


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"input file not found: {path}")
    return p.read_text()


def load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_load_json(args.config))
    for key in ("seed", "samples", "workers", "out"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if "out" not in cfg or not cfg["out"]:
        raise UsageError("an output directory is required (--out or config 'out')")
    if cfg.get("samples") is not None and cfg["samples"] < 1:
        raise UsageError("samples must be >= 1")
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_meta(out: Path, command: str, cfg: dict, outputs: list[str]) -> None:
    meta = {
        "command": command,
        "version": moluq.__version__,
        "config": {k: v for k, v in sorted(cfg.items()) if k != "out"},
        "outputs": sorted(outputs),
    }
    (out / f"{command}_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _resolve_input(cfg: dict, key: str, default: str | None = None) -> str:
    """Resolve an input path and pin the absolute form into the config.

    The pinned path lands in the metadata sidecar, which makes a sidecar
    sufficient to replay the run from any output directory.
    """
    path = cfg.get(key) or default
    if not path:
        raise UsageError(f"config key {key!r} (an input path) is required")
    resolved = Path(path)
    if not resolved.exists():
        raise UsageError(f"input file not found: {path}")
    cfg[key] = str(resolved.resolve())
    return cfg[key]


def _load_structure(cfg, key: str = "structure") -> molio.Structure:
    path = _resolve_input(cfg, key)
    s = molio.parse_pdb(_read_text(path))
    if cfg.get("params"):
        table = molio.ParamTable.from_json(_read_text(_resolve_input(cfg, "params")))
    else:
        table = molio.ParamTable.default()
    s = molio.assign_params(s, table)
    return molio.detect_bonds(s)


def _map_workers(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- sample

def run_sample(cfg) -> list[str]:
    out = _out_dir(cfg)
    if cfg.get("samples") is None:
        raise UsageError("--samples is required for 'sample' (no built-in default: "
                         "use 'saturate' to pick a count)")
    s = _load_structure(cfg)
    seed, n = int(cfg["seed"]), int(cfg["samples"])
    clash = cfg.get("clash_factor")
    if cfg["mode"] == "cartesian":
        sigmas = conformers.cartesian_sigmas(s)
        for chain in cfg.get("fixed_chains", []):
            for idx in s.chains.get(chain, []):
                sigmas[idx] = 0.0
        ens = conformers.sample_cartesian_ensemble(s, seed, n, clash_factor=clash,
                                                   sigmas=sigmas)
    elif cfg["mode"] == "torsion":
        if cfg.get("torsion_dihedrals"):
            spec = _load_json(_resolve_input(cfg, "torsion_dihedrals"))
            dihedrals = [(tuple(d["atoms"]), d.get("lower", -np.pi), d.get("upper", np.pi))
                         for d in spec["dihedrals"]]
            graph = conformers.torsion_graph_from_dihedrals(s, dihedrals)
        else:
            graph = conformers.build_torsion_graph(s)
        ens = conformers.sample_torsion_ensemble(graph, seed, n, clash_factor=clash)
    else:
        raise UsageError(f"unknown sampling mode {cfg['mode']!r}")

    accepted = ens.accepted()
    if not accepted:
        raise ValueError("no conformer passed the clash filter; nothing to write")
    pdb_text = molio.write_pdb_models(
        s, [c.positions for c in accepted], [c.sample_index + 1 for c in accepted]
    )
    (out / "ensemble.pdb").write_text(pdb_text)
    manifest = {
        "seed": seed,
        "samples": n,
        "mode": cfg["mode"],
        "sequence": "sobol-scrambled",
        "clash_factor": clash,
        "accepted": [c.sample_index for c in accepted],
        "rejected": [
            {"sample_index": c.sample_index, "reason": c.rejection_reason}
            for c in ens.conformers if not c.accepted
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ["ensemble.pdb", "manifest.json"]


# ---------------------------------------------------------------- qoi

def _qoi_config(cfg) -> qoi.QOIConfig:
    diel = cfg.get("dielectric", DEFAULTS["dielectric"])
    return qoi.QOIConfig(
        probe=float(cfg["probe"]), n_points=int(cfg["n_points"]),
        spacing=float(cfg["spacing"]),
        coulomb=qoi.CoulombModel(mode=diel["mode"], value=float(diel["value"])),
        solvent_dielectric=float(cfg["solvent_dielectric"]),
    )


def _split_chains(s: molio.Structure, cfg):
    chains = s.chains
    names = list(chains)
    chain_a = cfg.get("chain_a") or (names[0] if names else None)
    chain_b = cfg.get("chain_b") or (names[1] if len(names) > 1 else None)
    idx_a = chains.get(chain_a, []) if chain_a else []
    idx_b = chains.get(chain_b, []) if chain_b else []
    return idx_a, idx_b


def run_qoi(cfg) -> list[str]:
    out = _out_dir(cfg)
    s = _load_structure(cfg)
    ensemble_path = _resolve_input(cfg, "ensemble",
                                   default=str(Path(cfg["out"]) / "ensemble.pdb"))
    models = molio.parse_pdb_models(_read_text(ensemble_path))
    kinds = [qoi.QOIKind(k) for k in cfg["qoi"]]
    qcfg = _qoi_config(cfg)
    idx_a, idx_b = _split_chains(s, cfg)
    if any(k.is_delta for k in kinds) and not idx_b:
        raise ValueError("delta QOIs need two chains (set chain_a/chain_b)")

    def evaluate(positions) -> dict[str, float]:
        row = {}
        full = qoi.AtomSet.from_structure(s, positions=positions)
        for kind in kinds:
            if kind.is_delta:
                sub_a = qoi.AtomSet.from_structure(s.subset(idx_a), positions=positions[idx_a])
                sub_b = qoi.AtomSet.from_structure(s.subset(idx_b), positions=positions[idx_b])
                row[kind.value] = qoi.delta_qoi(kind.base, sub_a, sub_b, qcfg)
            else:
                row[kind.value] = qoi.evaluate_qoi(kind, full, config=qcfg)
        return row

    # keep original sample indices when the ensemble's manifest is available
    indices = list(range(len(models)))
    manifest_path = Path(ensemble_path).parent / "manifest.json"
    if manifest_path.exists():
        recorded = json.loads(manifest_path.read_text()).get("accepted", [])
        if len(recorded) == len(models):
            indices = recorded
    samples = [(-1, s.positions())] + [
        (idx, m.positions()) for idx, m in zip(indices, models)
    ]
    rows = _map_workers(lambda item: (item[0], evaluate(item[1])), samples,
                        int(cfg.get("workers", 1)))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["qoi", "sample_index", "value"])
    for kind in kinds:
        for sample_index, row in rows:
            writer.writerow([kind.value, sample_index, _fmt(row[kind.value])])
    (out / "qoi_values.csv").write_text(buf.getvalue())
    return ["qoi_values.csv"]


def _read_value_streams(path: str):
    """qoi_values.csv -> {qoi: (reference or None, [values in sample order])}."""
    text = _read_text(path)
    streams: dict[str, dict] = {}
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or {"qoi", "sample_index", "value"} - set(reader.fieldnames):
        raise DataFormatError(f"{path}: expected columns qoi,sample_index,value")
    for row in reader:
        entry = streams.setdefault(row["qoi"], {"reference": None, "values": []})
        try:
            idx = int(row["sample_index"])
            val = float(row["value"])
        except ValueError:
            raise DataFormatError(f"{path}: non-numeric row {row}") from None
        if idx < 0:
            entry["reference"] = val
        else:
            entry["values"].append((idx, val))
    for entry in streams.values():
        entry["values"] = [v for _i, v in sorted(entry["values"])]
    return streams


# ---------------------------------------------------------------- certify

def run_certify(cfg) -> list[str]:
    out = _out_dir(cfg)
    values_path = _resolve_input(cfg, "values",
                                 default=str(Path(cfg["out"]) / "qoi_values.csv"))
    streams = _read_value_streams(values_path)
    if not streams:
        raise ValueError("no QOI streams found in values file")
    t_grid = tuple(float(t) for t in cfg["t_grid"])

    cert_buf = io.StringIO()
    cw = csv.writer(cert_buf, lineterminator="\n")
    cw.writerow(["qoi", "t", "epsilon"])
    z_buf = io.StringIO()
    zw = csv.writer(z_buf, lineterminator="\n")
    zw.writerow(["qoi", "reference", "mean", "std", "zscore"])
    text_lines = ["qoi".ljust(16) + "".join(f"{t:>9g}" for t in t_grid)]
    for name, entry in sorted(streams.items()):
        dist = certificates.EmpiricalDistribution.from_values(entry["values"])
        table = certificates.chernoff_table(dist, t_grid)
        for t, eps in zip(table.t_values, table.epsilons):
            cw.writerow([name, _fmt(t), _fmt(eps)])
        text_lines.append(name.ljust(16) + "".join(f"{e:>9.3f}" for e in table.epsilons))
        if entry["reference"] is not None and dist.std > 0:
            z = certificates.zscore(entry["reference"], dist)
            zw.writerow([name, _fmt(entry["reference"]), _fmt(dist.mean),
                         _fmt(dist.std), _fmt(z)])
    (out / "certificates.csv").write_text(cert_buf.getvalue())
    (out / "certificates.txt").write_text("\n".join(text_lines) + "\n")
    (out / "zscores.csv").write_text(z_buf.getvalue())
    return ["certificates.csv", "certificates.txt", "zscores.csv"]


# ---------------------------------------------------------------- saturate

def run_saturate(cfg) -> list[str]:
    out = _out_dir(cfg)
    values_path = _resolve_input(cfg, "values",
                                 default=str(Path(cfg["out"]) / "qoi_values.csv"))
    streams = _read_value_streams(values_path)
    if not streams:
        raise ValueError("no QOI streams found in values file")
    t_grid = tuple(float(t) for t in cfg["t_grid"])
    outputs = []
    reports = []
    for name, entry in sorted(streams.items()):
        try:
            report = certificates.saturation(entry["values"], tau=float(cfg["tau"]),
                                             t_values=t_grid, mode=cfg["saturation_mode"],
                                             qoi=name)
        except ValueError as exc:
            # degenerate streams (zero-mean blocks, too short) are reported,
            # not allowed to abort the rest of the batch
            reports.append({"qoi": name, "error": str(exc)})
            continue
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r", "error"])
        for r, err in report.error_curve:
            writer.writerow([r, _fmt(err)])
        fname = f"saturation_{name}.csv"
        (out / fname).write_text(buf.getvalue())
        outputs.append(fname)
        reports.append({"qoi": name, "mode": report.mode, "tau": report.tau,
                        "r_star": report.r_star, "saturated": report.saturated})
    if not any("r_star" in r for r in reports):
        raise ValueError("no stream produced a saturation report: "
                         + "; ".join(f"{r['qoi']}: {r['error']}" for r in reports))
    (out / "saturation.json").write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n")
    outputs.append("saturation.json")
    return outputs


# ---------------------------------------------------------------- bound

def run_bound(cfg) -> list[str]:
    out = _out_dir(cfg)
    spec_cfg = cfg.get("bound")
    if spec_cfg is None:
        spec_cfg = _load_json(_resolve_input(cfg, "bound_config"))
    t_grid = [float(t) for t in spec_cfg.get("t_grid", cfg["t_grid"])]
    mode = spec_cfg.get("mode", "single")
    mc_draws = int(spec_cfg.get("mc_draws", 0))
    rng = np.random.default_rng(int(spec_cfg.get("mc_seed", cfg["seed"])))

    deviations: list[float] = []
    mc_values = None
    if mode == "single":
        kspec = bounds.KernelSpec(tuple(tuple(t) for t in spec_cfg["kernel"]["terms"]))
        box = bounds.BoxDomain(tuple(tuple(iv) for iv in spec_cfg["box"]))
        deviations = [bounds.d3_bound(kspec, box, i) for i in range(box.dim)]
        bound_at = lambda t: bounds.mcdiarmid_tail(deviations, t)
        if mc_draws:
            lo, hi = box.lowers(), box.uppers()
            pts = lo + rng.random((mc_draws, box.dim)) * (hi - lo)
            norms = np.linalg.norm(pts, axis=1)
            mc_values = sum(a / norms**b for a, b in kspec.terms)
    elif mode == "pairwise":
        kspec = bounds.KernelSpec(tuple(tuple(t) for t in spec_cfg["kernel"]["terms"]))
        boxes_a = [bounds.BoxDomain(tuple(tuple(iv) for iv in b)) for b in spec_cfg["boxes_a"]]
        boxes_b = [bounds.BoxDomain(tuple(tuple(iv) for iv in b)) for b in spec_cfg["boxes_b"]]
        bound_at = lambda t: bounds.pairwise_sum_tail(kspec, boxes_a, boxes_b, t)
        if mc_draws:
            total = np.zeros(mc_draws)
            for ba in boxes_a:
                xa = ba.lowers() + rng.random((mc_draws, ba.dim)) * (ba.uppers() - ba.lowers())
                for bb in boxes_b:
                    xb = bb.lowers() + rng.random((mc_draws, bb.dim)) * (bb.uppers() - bb.lowers())
                    norms = np.linalg.norm(xb - xa, axis=1)
                    total += sum(a / norms**b for a, b in kspec.terms)
            mc_values = total
    elif mode == "azuma":
        aspec = bounds.AzumaSpec(tuple(float(c) for c in spec_cfg["c"]))
        bound_at = lambda t: bounds.azuma_tail(aspec, t)
    else:
        raise UsageError(f"unknown bound mode {mode!r}")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["t", "bound"] + (["mc_estimate"] if mc_values is not None else [])
    writer.writerow(header)
    if mc_values is not None:
        mean = float(mc_values.mean())
    for t in t_grid:
        row = [_fmt(t), _fmt(bound_at(t))]
        if mc_values is not None:
            row.append(_fmt(float((np.abs(mc_values - mean) > t).mean())))
        writer.writerow(row)
    (out / "bounds.csv").write_text(buf.getvalue())
    if deviations:
        (out / "deviations.json").write_text(
            json.dumps({"deviations": deviations}, indent=2) + "\n")
        return ["bounds.csv", "deviations.json"]
    return ["bounds.csv"]


# ---------------------------------------------------------------- bindsite

def _load_poses(raw) -> list[bindsite.Pose]:
    poses = []
    for entry in raw:
        rot = np.array(entry["rotation"], dtype=float).reshape(3, 3)
        poses.append(bindsite.Pose(rotation=rot,
                                   translation=np.array(entry["translation"], dtype=float),
                                   rank=int(entry.get("rank", 0)),
                                   source_conformer=entry.get("model")))
    return poses


def run_bindsite(cfg) -> list[str]:
    out = _out_dir(cfg)
    receptor = _load_structure(cfg)
    ligand_models = molio.parse_pdb_models(_read_text(_resolve_input(cfg, "ligand")))
    raw = _load_json(_resolve_input(cfg, "poses"))
    model = bindsite.ContactModel(cutoff=float(cfg["contact_cutoff"]))

    if raw and isinstance(raw[0], dict) and "poses" in raw[0]:
        per_conformer = []
        for group in raw:
            per_conformer.append(_load_poses(group["poses"]))
        confs = tuple(
            conformers.Conformer(positions=m.positions(), sample_index=i)
            for i, m in enumerate(ligand_models)
        )
        ens = conformers.Ensemble(source=ligand_models[0], conformers=confs,
                                  seed=int(cfg["seed"]))
        site_map = bindsite.binding_site_prob_multi(receptor, ens, per_conformer, model)
    else:
        lig = conformers.Conformer(positions=ligand_models[0].positions(), sample_index=0)
        site_map = bindsite.binding_site_prob(receptor, lig, _load_poses(raw), model)

    atom_buf = io.StringIO()
    aw = csv.writer(atom_buf, lineterminator="\n")
    aw.writerow(["serial", "chain", "residue_seq", "residue_name", "p_bs"])
    for atom, p in zip(receptor.atoms, site_map.probabilities):
        aw.writerow([atom.serial, atom.chain_id, atom.residue_seq, atom.residue_name, _fmt(p)])
    (out / "bindsite_atoms.csv").write_text(atom_buf.getvalue())

    res_buf = io.StringIO()
    rw = csv.writer(res_buf, lineterminator="\n")
    rw.writerow(["chain", "residue_seq", "residue_name", "p_bs"])
    for (chain, seq, name), p in bindsite.residue_site_probabilities(receptor, site_map):
        rw.writerow([chain, seq, name, _fmt(p)])
    (out / "bindsite_residues.csv").write_text(res_buf.getvalue())

    colors_csv, script = vizgrid.colormap_export(
        [a.serial for a in receptor.atoms], site_map.probabilities, palette="rainbow")
    (out / "bindsite_colors.csv").write_text(colors_csv)
    (out / "bindsite_colors.pml").write_text(script)
    return ["bindsite_atoms.csv", "bindsite_residues.csv",
            "bindsite_colors.csv", "bindsite_colors.pml"]


# ---------------------------------------------------------------- volmap / modes

def _load_ensemble(cfg) -> conformers.Ensemble:
    s = _load_structure(cfg)
    ensemble_path = _resolve_input(cfg, "ensemble",
                                   default=str(Path(cfg["out"]) / "ensemble.pdb"))
    models = molio.parse_pdb_models(_read_text(ensemble_path))
    confs = tuple(
        conformers.Conformer(positions=m.positions(), sample_index=i)
        for i, m in enumerate(models)
    )
    return conformers.Ensemble(source=s, conformers=confs, seed=int(cfg["seed"]))


def run_volmap(cfg) -> list[str]:
    out = _out_dir(cfg)
    ens = _load_ensemble(cfg)
    grid = vizgrid.occupancy_map(ens, spacing=float(cfg["spacing"]),
                                 radius_mode=cfg.get("radius_mode", "vdw"))
    (out / "occupancy.dx").write_text(vizgrid.write_grid(grid))
    return ["occupancy.dx"]


def run_modes(cfg) -> list[str]:
    out = _out_dir(cfg)
    ens = _load_ensemble(cfg)
    variances, axes = conformers.atom_motion_modes(ens)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["serial", "var1", "var2", "var3",
                     "v1x", "v1y", "v1z", "v2x", "v2y", "v2z", "v3x", "v3y", "v3z"])
    for atom, var, ax in zip(ens.source.atoms, variances, axes):
        writer.writerow([atom.serial] + [_fmt(v) for v in var]
                        + [_fmt(x) for x in ax.reshape(-1)])
    (out / "modes.csv").write_text(buf.getvalue())
    return ["modes.csv"]


# ---------------------------------------------------------------- dispatch

COMMANDS = {
    "sample": run_sample,
    "qoi": run_qoi,
    "certify": run_certify,
    "saturate": run_saturate,
    "bound": run_bound,
    "bindsite": run_bindsite,
    "volmap": run_volmap,
    "modes": run_modes,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="moluq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
    replay = sub.add_parser("replay")
    replay.add_argument("sidecar", help="a <command>_meta.json from a previous run")
    replay.add_argument("--out", default=None)
    return parser


def _execute(command: str, cfg: dict) -> None:
    outputs = COMMANDS[command](cfg)
    _write_meta(_out_dir(cfg), command, cfg, outputs)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            meta = _load_json(args.sidecar)
            cfg = dict(meta["config"])
            cfg["out"] = args.out or str(Path(args.sidecar).parent)
            _execute(meta["command"], cfg)
        else:
            cfg = load_config(args)
            _execute(args.command, cfg)
        return 0
    except UsageError as exc:
        print(f"moluq: usage error: {exc}", file=sys.stderr)
        return 1
    except (molio.PdbParseError, vizgrid.GridFormatError, DataFormatError,
            json.JSONDecodeError) as exc:
        print(f"moluq: data error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, KeyError) as exc:
        print(f"moluq: domain error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
