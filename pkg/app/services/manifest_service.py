"""
Manifest Service

Run manifests: the command, its resolved configuration, digests of every input
and output file, the seed and the tool version. Paths are stored relative to
the manifest's directory.
"""

import json
import os
from typing import Dict, List, Optional, Sequence

from app import __version__
from app.exceptions import DigestMismatch
from app.models.schemas import RunManifest
from app.utils.files import atomic_write_text, file_digest
from app.utils.logging_config import get_logger

logger = get_logger("manifest_service")


class ManifestService:
    """
    Service for writing and verifying run manifests.
    """

    @staticmethod
    def _digests(paths: Sequence[str], base_dir: str) -> Dict[str, str]:
        return {
            os.path.relpath(os.path.abspath(path), base_dir): file_digest(path)
            for path in sorted(set(paths))
        }

    @staticmethod
    def write_manifest(
        path: str,
        command: str,
        config: Dict,
        inputs: Sequence[str],
        outputs: Sequence[str],
        seed: int = 0,
        wall_clock_seconds: float = 0.0,
        force: bool = False,
    ) -> RunManifest:
        """
        Digest the inputs and outputs and write the manifest as JSON.

        Args:
            path: Manifest file
            command: Subcommand name
            config: Resolved configuration snapshot (JSON-serializable)
            inputs: Input files
            outputs: Output files
            seed: Seed of the run
            wall_clock_seconds: Duration
            force: Overwrite an existing manifest

        Returns:
            RunManifest: The written manifest
        """
        base_dir = os.path.dirname(os.path.abspath(path))
        manifest = RunManifest(
            command=command,
            config=json.loads(json.dumps(config, default=str)),
            inputs=ManifestService._digests(inputs, base_dir),
            outputs=ManifestService._digests(outputs, base_dir),
            seed=seed,
            tool_version=__version__,
            wall_clock_seconds=wall_clock_seconds,
        )
        atomic_write_text(path, manifest.model_dump_json(indent=2) + "\n", force)
        logger.info(f"Manifest written to {path} ({len(manifest.outputs)} outputs)")
        return manifest

    @staticmethod
    def load_manifest(path: str) -> RunManifest:
        with open(path, "r", encoding="utf-8") as handle:
            return RunManifest.model_validate_json(handle.read())

    @staticmethod
    def verify_manifest(path: str, strict: bool = False) -> List[str]:
        """
        Re-digest every referenced file.

        Args:
            path: Manifest file
            strict: Raise instead of returning the mismatches

        Returns:
            List[str]: Paths whose digest differs or that are missing

        Raises:
            DigestMismatch: When strict and a file does not match
        """
        manifest = ManifestService.load_manifest(path)
        base_dir = os.path.dirname(os.path.abspath(path))
        mismatched = []
        for relative, digest in {**manifest.inputs, **manifest.outputs}.items():
            target = os.path.join(base_dir, relative)
            if not os.path.exists(target) or file_digest(target) != digest:
                mismatched.append(relative)
        if mismatched:
            logger.warning(f"Manifest {path}: {len(mismatched)} file(s) changed or missing")
            if strict:
                raise DigestMismatch(f"Files changed since the run: {', '.join(mismatched)}", files=mismatched)
        return mismatched

    @staticmethod
    def manifest_path(out_path: str, command: str, directory: Optional[bool] = None) -> str:
        """Manifest location for a command output: inside a directory, next to a file."""
        is_dir = os.path.isdir(out_path) if directory is None else directory
        if is_dir:
            return os.path.join(out_path, f"{command}.manifest.json")
        return f"{out_path}.manifest.json"
