"""Tableaux comparatifs à partir des CSV produits par eval-kld et eval-denoiser."""
import csv
import html
import logging
from pathlib import Path
from typing import Dict, List, Sequence

from ..errors import MissingFileError

logger = logging.getLogger(__name__)

KL_TABLE = "noise_models.csv"
DENOISER_TABLE = "denoisers.csv"
HTML_REPORT = "report.html"


def _read_rows(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def check_inputs(paths: Sequence) -> List[Path]:
    resolved = [Path(p) for p in paths]
    missing = [str(p) for p in resolved if not p.is_file()]
    if missing:
        raise MissingFileError("missing input CSV files", ", ".join(missing))
    return resolved


def kl_table(paths: Sequence[Path]) -> List[Dict[str, str]]:
    """Une ligne par (source, modèle): KL moyen toutes caméras puis par caméra"""
    rows = []
    for path in paths:
        by_model: Dict[str, Dict[str, str]] = {}
        for row in _read_rows(path):
            entry = by_model.setdefault(row["model"], {"source": path.stem, "model": row["model"]})
            # La ligne camera="all" porte la moyenne globale
            column = "kl_mean" if row["camera"] == "all" else f"kl_{row['camera']}"
            if row["scene"] in ("all", ""):
                entry[column] = row["kl_mean"]
        rows.extend(by_model.values())
    return rows


def denoiser_table(paths: Sequence[Path]) -> List[Dict[str, str]]:
    """Une ligne par débruiteur: PSNR/SSIM global puis PSNR par caméra"""
    rows = []
    for path in paths:
        by_denoiser: Dict[str, Dict[str, str]] = {}
        for row in _read_rows(path):
            entry = by_denoiser.setdefault(row["denoiser"], {"denoiser": row["denoiser"]})
            if row["camera"] == "overall":
                entry["psnr"] = row["psnr"]
                entry["ssim"] = row["ssim"]
            else:
                entry[f"psnr_{row['camera']}"] = row["psnr"]
        rows.extend(by_denoiser.values())
    return rows


def _columns(rows: List[Dict[str, str]]) -> List[str]:
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return columns


def _write_csv(path: Path, rows: List[Dict[str, str]]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=_columns(rows), restval="")
        writer.writeheader()
        writer.writerows(rows)
    return path


def _html_table(title: str, rows: List[Dict[str, str]]) -> str:
    columns = _columns(rows)
    head = "".join(f"<th>{html.escape(c)}</th>" for c in columns)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(row.get(c, ''))}</td>" for c in columns) + "</tr>"
        for row in rows
    )
    return f"<h2>{html.escape(title)}</h2>\n<table border=\"1\"><tr>{head}</tr>{body}</table>"


def build_report(kl_csvs: Sequence, denoiser_csvs: Sequence, out_dir, with_html: bool = False) -> List[Path]:
    kl_paths = check_inputs(kl_csvs)
    denoiser_paths = check_inputs(denoiser_csvs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    sections = []
    if kl_paths:
        rows = kl_table(kl_paths)
        written.append(_write_csv(out / KL_TABLE, rows))
        sections.append(_html_table("Noise models (mean KL)", rows))
    if denoiser_paths:
        rows = denoiser_table(denoiser_paths)
        written.append(_write_csv(out / DENOISER_TABLE, rows))
        sections.append(_html_table("Denoisers (PSNR / SSIM)", rows))
    if with_html:
        page = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>noisegen report</title></head><body>\n"
        page += "\n".join(sections) + "\n</body></html>\n"
        html_path = out / HTML_REPORT
        html_path.write_text(page, encoding="utf-8")
        written.append(html_path)
    logger.info("Rapport écrit: %s", ", ".join(p.name for p in written))
    return written
