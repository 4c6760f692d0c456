"""
Report Service

Persists attack reports and turns a set of them into plot-ready CSV files:
a long table, a table with one column per object plus an average column, and
scatter data of texel change against accuracy drop.

Column orders are fixed and floats are written with repr so identical
inputs give byte-identical files.
"""

import csv
import glob
import io
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import AdvObjectError
from app.models.schemas import AttackReport
from app.utils.files import atomic_write_text
from app.utils.logging_config import get_logger

logger = get_logger("report_service")

NOT_APPLICABLE = "n.a."
NO_MASK = "none"

LONG_COLUMNS = [
    "object_id",
    "renderer",
    "classifier_id",
    "epsilon",
    "tau",
    "a_before",
    "a_after",
    "a_drop",
    "n_pct",
    "changed_texel_fraction",
    "mask_fraction",
]
SCATTER_COLUMNS = [
    "n_pct",
    "a_drop",
    "epsilon",
    "tau",
    "renderer",
    "classifier_id",
    "object_id",
    "changed_texel_fraction",
]
TABLE_KEYS = ["renderer", "classifier_id", "epsilon", "tau"]


def format_value(value) -> str:
    """CSV cell text: n.a. for None, repr for floats."""
    if value is None:
        return NOT_APPLICABLE
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def format_tau(tau: Optional[float]) -> str:
    return NO_MASK if tau is None else repr(float(tau))


def _tau_key(tau: Optional[float]) -> Tuple[int, float]:
    return (0, 0.0) if tau is None else (1, float(tau))


def _write_csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


class ReportService:
    """
    Service for saving, loading and tabulating attack reports.
    """

    @staticmethod
    def report_filename(report: AttackReport) -> str:
        return (
            f"report_{report.object_id}_{report.renderer.value}_{report.classifier_id}"
            f"_eps{report.epsilon}_tau{format_tau(report.tau)}.json"
        )

    @staticmethod
    def texture_filename(object_id: str, classifier_id: str, epsilon: float, tau: Optional[float]) -> str:
        return f"adv_{object_id}_{classifier_id}_eps{epsilon}_tau{format_tau(tau)}.png"

    @staticmethod
    def save_report(report: AttackReport, path: str, force: bool = False) -> None:
        atomic_write_text(path, report.to_json() + "\n", force)
        logger.info(f"Report written to {path}")

    @staticmethod
    def load_report(path: str) -> AttackReport:
        with open(path, "r", encoding="utf-8") as handle:
            return AttackReport.model_validate_json(handle.read())

    @staticmethod
    def load_reports(in_dir: str) -> List[AttackReport]:
        """Every report_*.json below in_dir, in sorted path order."""
        paths = sorted(glob.glob(os.path.join(in_dir, "**", "report_*.json"), recursive=True))
        logger.info(f"Found {len(paths)} reports under {in_dir}")
        return [ReportService.load_report(path) for path in paths]

    @staticmethod
    def sort_key(report: AttackReport):
        return (
            report.object_id,
            report.renderer.value,
            report.classifier_id,
            report.epsilon,
            _tau_key(report.tau),
            report.seed,
        )

    @staticmethod
    def long_rows(reports: Sequence[AttackReport]) -> List[List[str]]:
        rows = []
        for report in sorted(reports, key=ReportService.sort_key):
            data = report.model_dump()
            rows.append([format_tau(report.tau) if c == "tau" else format_value(data[c]) for c in LONG_COLUMNS])
        return rows

    @staticmethod
    def scatter_rows(reports: Sequence[AttackReport]) -> List[List[str]]:
        rows = []
        for report in sorted(reports, key=ReportService.sort_key):
            data = report.model_dump()
            rows.append([format_tau(report.tau) if c == "tau" else format_value(data[c]) for c in SCATTER_COLUMNS])
        return rows

    @staticmethod
    def table(reports: Sequence[AttackReport]) -> Tuple[List[str], List[List[str]]]:
        """
        One row per (renderer, classifier, epsilon, tau), one accuracy-drop column per
        object and an average column over the applicable cells.

        Returns:
            Tuple[List[str], List[List[str]]]: Header and rows
        """
        objects = sorted({r.object_id for r in reports})
        cells: Dict[tuple, Dict[str, Optional[float]]] = {}
        for report in sorted(reports, key=ReportService.sort_key):
            key = (report.renderer.value, report.classifier_id, report.epsilon, _tau_key(report.tau), report.tau)
            row = cells.setdefault(key, {})
            if report.object_id in row:
                logger.warning(
                    f"Duplicate report for {report.object_id} at {key[:3]}, tau={format_tau(report.tau)}; "
                    "keeping the first"
                )
                continue
            row[report.object_id] = report.a_drop

        header = TABLE_KEYS + objects + ["average"]
        rows = []
        for key in sorted(cells, key=lambda k: k[:4]):
            renderer, classifier_id, epsilon, _, tau = key
            values = cells[key]
            applicable = [v for v in values.values() if v is not None]
            average = float(np.mean(applicable)) if applicable else None
            row = [renderer, classifier_id, repr(float(epsilon)), format_tau(tau)]
            row += [format_value(values[o]) if o in values else "" for o in objects]
            row.append(format_value(average))
            rows.append(row)
        return header, rows

    @staticmethod
    def table_stem(reports: Sequence[AttackReport]) -> str:
        """
        File-name stem for a set of reports: object id, classifier id, epsilons and taus.

        Several objects or classifiers collapse into a count, e.g.
        ``8objects_clf-1a2b3c4d_eps0.05-0.1_taunone-0.2``.
        """
        objects = sorted({r.object_id for r in reports})
        classifiers = sorted({r.classifier_id for r in reports})
        epsilons = sorted({float(r.epsilon) for r in reports})
        taus = sorted({r.tau for r in reports}, key=_tau_key)
        object_part = objects[0] if len(objects) == 1 else f"{len(objects)}objects"
        classifier_part = classifiers[0] if len(classifiers) == 1 else f"{len(classifiers)}classifiers"
        return (
            f"{object_part}_{classifier_part}"
            f"_eps{'-'.join(repr(e) for e in epsilons)}_tau{'-'.join(format_tau(t) for t in taus)}"
        )

    @staticmethod
    def emit_report(reports: Sequence[AttackReport], out_dir: str, force: bool = False) -> Dict[str, str]:
        """
        Write table_<stem>.csv, table_long_<stem>.csv and scatter_<stem>.csv, the stem
        coming from table_stem.

        Args:
            reports: At least one report
            out_dir: Output directory
            force: Overwrite existing files

        Returns:
            Dict[str, str]: Kind -> written path
        """
        if not reports:
            raise AdvObjectError("No attack reports to tabulate")
        os.makedirs(out_dir, exist_ok=True)
        header, rows = ReportService.table(reports)
        stem = ReportService.table_stem(reports)
        outputs = {
            "table": (os.path.join(out_dir, f"table_{stem}.csv"), _write_csv(header, rows)),
            "long": (
                os.path.join(out_dir, f"table_long_{stem}.csv"),
                _write_csv(LONG_COLUMNS, ReportService.long_rows(reports)),
            ),
            "scatter": (
                os.path.join(out_dir, f"scatter_{stem}.csv"),
                _write_csv(SCATTER_COLUMNS, ReportService.scatter_rows(reports)),
            ),
        }
        for path, text in outputs.values():
            atomic_write_text(path, text, force)
        logger.info(f"Wrote {len(rows)} table rows from {len(reports)} reports to {out_dir}")
        return {kind: path for kind, (path, _) in outputs.items()}
