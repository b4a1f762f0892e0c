"""
Entry script: python run_pipeline.py {prep,train,eval,baseline,analyze,pipeline} [flags]
Runs the road-fatality forecasting pipeline. Each stage reads the
artifacts of the stage before it from the output directory, so running
`pipeline` is the same as running the five stages in order.

Exit codes: 0 success, 2 input/schema/artifact error, 3 numeric
divergence, 4 configuration error.
"""
import argparse
import logging
import sys
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from analysis import evaluate, trend, vehicle_correlations
from artifact_store import ArtifactError, ArtifactStore
from baselines import BaselineError, run_baselines
from config import Config, ConfigValidationError, RunConfig
from data_handler import (DataSchemaError, ScaleParams, WindowedDataset, apply_scale, fit_scale,
                          invert_values, load_merged_table, make_windows, split)
from engines.cells import build_model, spec_from_document, spec_to_document
from engines.numkernel import RNG_ALGORITHM, NumericError
from engines.training import fit, mse_loss, predict
from model_constants import YEAR_COLUMN, ArtifactNames, ExitCodes, feature_columns, get_variant_display_name

logger = logging.getLogger(__name__)

STAGES = ("prep", "train", "eval", "baseline", "analyze")


@dataclass
class PreparedData:
    """Scaled table framed as windows, plus the unscaled table for reporting."""
    merged: pd.DataFrame
    params: ScaleParams
    dataset: WindowedDataset
    train: WindowedDataset
    test: WindowedDataset
    feature_cols: List[str]


def _provenance(cfg: RunConfig) -> Dict:
    return {"config": cfg.to_dict(), "seed": cfg.seed, "rng": RNG_ALGORITHM}


def _load_prepared(cfg: RunConfig, store: ArtifactStore) -> PreparedData:
    merged = store.load_csv(ArtifactNames.MERGED_TABLE, required_columns=[YEAR_COLUMN, cfg.target])
    doc = store.load_json(ArtifactNames.SCALE_PARAMS, required_keys=["params"])
    params = ScaleParams.from_dict(doc["params"])

    feature_cols = feature_columns(cfg.paper_faithful, cfg.target)
    missing = [c for c in feature_cols + [cfg.target] if c not in params.center]
    if missing:
        raise ArtifactError(f"{ArtifactNames.SCALE_PARAMS} has no scaling for {missing}; rerun prep")

    dataset = make_windows(apply_scale(merged, params), feature_cols, cfg.target, cfg.lookback, cfg.target_mode)
    train, test = split(dataset, cfg.train_fraction, cfg.split, cfg.seed)
    return PreparedData(merged=merged, params=params, dataset=dataset, train=train, test=test,
                        feature_cols=feature_cols)


def _load_model(store: ArtifactStore):
    doc = store.load_json(ArtifactNames.CHECKPOINT, required_keys=["model"])
    try:
        return spec_from_document(doc["model"])
    except (KeyError, ValueError) as e:
        raise ArtifactError(f"Checkpoint {store.path(ArtifactNames.CHECKPOINT)} is unusable: {e}")


def _target_at(merged: pd.DataFrame, target: str, years, offset: int = 0) -> np.ndarray:
    """Unscaled target for each year, shifted by `offset` rows."""
    table_years = merged[YEAR_COLUMN].to_numpy(dtype=np.int64)
    rows = np.searchsorted(table_years, np.asarray(years, dtype=np.int64)) + offset
    return merged[target].to_numpy(dtype=np.float64)[rows]


# ----------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------
def cmd_prep(cfg: RunConfig, store: ArtifactStore) -> None:
    merged = load_merged_table(cfg.input_paths(), cfg.skip_rows)
    feature_cols = feature_columns(cfg.paper_faithful, cfg.target)
    scale_cols = list(dict.fromkeys(feature_cols + [cfg.target]))
    missing = [c for c in scale_cols if c not in merged.columns]
    if missing:
        raise DataSchemaError(f"Merged table lacks columns: {missing}")

    params = fit_scale(merged, scale_cols, cfg.scaler)
    store.save_csv(ArtifactNames.MERGED_TABLE, merged)
    store.save_json(ArtifactNames.SCALE_PARAMS, {
        "params": params.to_dict(),
        "feature_columns": feature_cols,
        "target": cfg.target,
        **_provenance(cfg),
    })


def cmd_train(cfg: RunConfig, store: ArtifactStore) -> None:
    data = _load_prepared(cfg, store)
    # an untrained model forecasts the mean training target
    spec = build_model(cfg.seed, len(data.feature_cols), cfg.variant, cfg.layers, cfg.hidden,
                       cfg.dropout, cfg.rho, cfg.freeze_regulation, readout_init=cfg.readout_init,
                       readout_bias=float(np.mean(data.train.targets)))
    train_cfg = cfg.train_config()
    result = fit(spec, data.train, train_cfg)

    store.save_json(ArtifactNames.CHECKPOINT, {
        "model": spec_to_document(result.best_spec),
        "best_epoch": result.best_epoch,
        "stopped_epoch": result.stopped_epoch,
        "feature_columns": data.feature_cols,
        "target": cfg.target,
        "lookback": cfg.lookback,
        "target_mode": cfg.target_mode,
        "train_config": asdict(train_cfg),
        "history": [list(h) for h in result.history],
        **_provenance(cfg),
    })
    store.save_csv(ArtifactNames.HISTORY, pd.DataFrame({
        "epoch": np.arange(1, len(result.history) + 1),
        "train_loss": [h[0] for h in result.history],
        "val_loss": [h[1] for h in result.history],
    }))
    logger.info(f"{get_variant_display_name(cfg.variant)}: best epoch {result.best_epoch} "
                f"of {result.stopped_epoch}")


def cmd_eval(cfg: RunConfig, store: ArtifactStore) -> None:
    data = _load_prepared(cfg, store)
    spec = _load_model(store)
    if spec.feature_count != len(data.feature_cols):
        raise ArtifactError(f"Checkpoint expects {spec.feature_count} features, data has "
                            f"{len(data.feature_cols)}; rerun train")

    scaled_pred = predict(spec, data.test.windows)
    test_loss = mse_loss(scaled_pred, data.test.targets)
    predicted = invert_values(data.test.levels(scaled_pred), data.params, cfg.target)
    actual = _target_at(data.merged, cfg.target, data.test.target_years)
    previous = _target_at(data.merged, cfg.target, data.test.target_years, offset=-1)

    report = evaluate(actual, predicted, data.test.target_years, test_loss, cfg.seed, cfg.to_dict(),
                      persistence_forecast=previous)
    store.save_json(ArtifactNames.EVAL_REPORT, report.to_document())
    logger.info(f"Test RMSE {report.rmse:.2f}, MAE {report.mae:.2f} over {report.n} years "
                f"(persistence RMSE {report.persistence['rmse']:.2f})")


def cmd_baseline(cfg: RunConfig, store: ArtifactStore) -> None:
    data = _load_prepared(cfg, store)
    # baselines always use the chronological boundary
    n_fit = cfg.lookback + int(np.floor(cfg.train_fraction * len(data.dataset)))
    block = run_baselines(data.merged[YEAR_COLUMN].to_numpy(), data.merged[cfg.target].to_numpy(),
                          n_fit, cfg.ar_order, cfg.ar_diff, cfg.ar_center)

    doc = store.load_json(ArtifactNames.EVAL_REPORT, required_keys=["rmse", "mae"])
    doc["baselines"] = block
    store.save_json(ArtifactNames.EVAL_REPORT, doc)


def cmd_analyze(cfg: RunConfig, store: ArtifactStore) -> None:
    data = _load_prepared(cfg, store)
    spec = _load_model(store)

    trend_report = trend(data.merged, cfg.target, cfg.trend_window)
    store.save_csv(ArtifactNames.TREND_REPORT, trend_report.to_frame())

    predicted = invert_values(data.dataset.levels(predict(spec, data.dataset.windows)), data.params, cfg.target)
    corr = vehicle_correlations(data.merged, predicted, data.dataset.target_years)
    store.save_csv(ArtifactNames.CORRELATIONS, corr.to_frame())

    doc = store.load_json(ArtifactNames.EVAL_REPORT, required_keys=["rmse", "mae"])
    doc["trend"] = trend_report.summary()
    store.save_json(ArtifactNames.EVAL_REPORT, doc)


def cmd_pipeline(cfg: RunConfig, store: ArtifactStore) -> None:
    for stage in STAGES:
        logger.info(f"=== {stage} ===")
        COMMANDS[stage](cfg, store)


COMMANDS: Dict[str, Callable[[RunConfig, ArtifactStore], None]] = {
    "prep": cmd_prep,
    "train": cmd_train,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "analyze": cmd_analyze,
    "pipeline": cmd_pipeline,
}


# ----------------------------------------------------------------------
# command line
# ----------------------------------------------------------------------
def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="Seed for every random stream")
    common.add_argument("--variant", choices=["lstm", "sr"], help="Recurrent cell variant")
    common.add_argument("--lookback", type=int, help="Years per input window")
    common.add_argument("--paper-faithful", action="store_true", default=None,
                        help="Keep the target among the input features")
    common.add_argument("--out", type=str, help="Output directory for artifacts")
    common.add_argument("--split", choices=["chrono", "shuffled"], help="Train/test split mode")
    common.add_argument("--target-mode", choices=["level", "change"], help="Forecast the next value or the step to it")
    common.add_argument("--scaler", choices=["robust", "minmax"], help="Column scaling")
    common.add_argument("--optimizer", choices=["adam", "rmsprop"], help="Parameter update rule")
    common.add_argument("--max-epochs", type=int, help="Upper bound on training epochs")
    common.add_argument("--freeze-regulation", action="store_true", default=None,
                        help="Pin the SR regulation to identity and exclude it from training")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Road-fatality LSTM / SR-LSTM forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser.parse_args(argv)


def setup_logging(verbose: bool) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if Config.LOG_FILE:
        handlers.append(logging.FileHandler(Config.LOG_FILE))
    level = logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s', handlers=handlers)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    setup_logging(args.verbose)

    overrides = {
        "seed": args.seed,
        "variant": args.variant,
        "lookback": args.lookback,
        "paper_faithful": args.paper_faithful,
        "out_dir": args.out,
        "split": args.split,
        "target_mode": args.target_mode,
        "scaler": args.scaler,
        "optimizer": args.optimizer,
        "max_epochs": args.max_epochs,
        "freeze_regulation": args.freeze_regulation,
    }
    try:
        cfg = RunConfig.from_sources(args.config, overrides)
        COMMANDS[args.command](cfg, ArtifactStore(cfg.out_dir))
    except ConfigValidationError as e:
        logger.error(f"Configuration error: {e}")
        return ExitCodes.CONFIG_ERROR
    except (DataSchemaError, ArtifactError) as e:
        logger.error(f"Input error: {e}")
        return ExitCodes.INPUT_ERROR
    except (NumericError, BaselineError) as e:
        logger.error(f"Numeric failure: {e}")
        return ExitCodes.DIVERGENCE

    logger.info(f"✅ {args.command} finished; artifacts in {cfg.out_dir}")
    return ExitCodes.OK


if __name__ == "__main__":
    sys.exit(main())
