"""
Shared builders for the commands: configuration, datasets, seeds and manifests
"""
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar
import argparse
import logging

from pydantic import ValidationError

from pacile.config import settings
from pacile.datasets import (
    MultiLabelDataset,
    SyntheticTask,
    load_csv,
    make_synthetic,
    sample_training_set,
    standardize_dataset,
)
from pacile.errors import ConfigError
from pacile.rng import SeedStream
from pacile.schemas import BaseSchema, DataOptions
from pacile.storage import digest_files, write_json
from pacile.utils import generate_report_filename, parse_key_value_lines

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseSchema)

FLAG_KEYS = {"seed": "seed", "out_dir": "out_dir", "threads": "threads"}


def load_config(schema: Type[ConfigT], args: argparse.Namespace) -> ConfigT:
    """
    Merge, lowest to highest priority: the config file, `--set` overrides,
    then the dedicated flags.
    """
    values: Dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_key_value_lines(path.read_text(encoding="utf-8"), source=str(path)))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    for attr, key in FLAG_KEYS.items():
        flag = getattr(args, attr, None)
        if flag is not None:
            values[key] = flag

    unknown = sorted(set(values) - set(schema.model_fields))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    try:
        config = schema(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    logger.debug(f"Effective configuration: {config.model_dump(mode='json')}")
    return config


def get_stream(config) -> SeedStream:
    return SeedStream(config.seed)


def get_dataset(config: DataOptions) -> Tuple[MultiLabelDataset, Optional[SyntheticTask]]:
    """
    The CSV dataset, or a synthetic task together with its training sample,
    standardized when the config asks for it
    """
    if config.dataset:
        dataset, task = load_csv(config.dataset), None
    else:
        task = make_synthetic(
            config.synthetic_seed,
            n_support=config.synthetic_support,
            n_labels=config.synthetic_labels,
            concentration=config.synthetic_concentration,
            loss=config.loss,
            n_features=config.synthetic_features,
        )
        dataset = sample_training_set(task, config.synthetic_m, SeedStream(config.synthetic_seed).child("data"))
        logger.info(f"Sampled synthetic training set: m={dataset.m}, l={dataset.n_labels}, sha256={dataset.digest[:12]}")
    if config.standardize:
        dataset, task = standardize_dataset(dataset, task)
    return dataset, task


def dataset_record(dataset: MultiLabelDataset, task: Optional[SyntheticTask], standardized: bool = False) -> Dict[str, Any]:
    record = dataset.metadata()
    record.update(m=dataset.m, source="synthetic" if task is not None else "csv", standardized=standardized)
    return record


def output_dir(config) -> Path:
    path = Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(
    command: str,
    config,
    out_dir: Path,
    files,
    extra: Optional[Dict[str, Any]] = None,
    undigested=(),
) -> Path:
    """
    Run manifest with the effective configuration and file digests.
    Files in `undigested` (wall-clock traces) are listed without a digest.
    """
    manifest: Dict[str, Any] = {
        "command": command,
        "version": settings.VERSION,
        "config": config.model_dump(mode="json"),
        "files": digest_files(files),
    }
    for path in undigested:
        manifest["files"][Path(path).name] = None
    manifest.update(extra or {})
    return write_json(out_dir / generate_report_filename(f"{command}_manifest", config.seed, ".json"), manifest)
