"""``hpsmp`` command line: dataset building, training, evaluation and backtests.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical error.  Every run writes ``run.json`` (config echo, seed and
package version) into its output directory.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .autodiff import NumericalError
from .backtest import (CLI_STRATEGIES, AlignmentError, DataError, StrategyConfig, TickerData, equal_weights,
                       market_weights, monte_carlo, portfolio_stats, simulate, write_monte_carlo)
from .config import MODEL_KINDS, PRESETS, ConfigError, RunConfig, resolve
from .dataset import (FIELDS, LabeledDataset, align, archive_bytes, archive_hash,
                      correlation_matrix, label, load_archive, read_prices, split, write_labeled)
from .model import HpsmpModel
from .stats import t_test
from .text import (EmbeddingTable, ParseError, PriceNormalizer, Vocabulary, build_vocab,
                   load_embeddings, read_tweets)
from .training import (TrainConfig, evaluate, examples_from_records, seed_streams, train,
                       write_curves)

logger = logging.getLogger("hpsmp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
SCORE_HEADER = ["Ticker", "Date", "AdjClose", "Score"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- shared helpers -----------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_run(cfg: RunConfig) -> None:
    _write_json(cfg.out / "run.json",
                {"command": cfg.command, "seed": cfg.seed, "version": __version__,
                 "config": cfg.to_dict()})


def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _print_table(rows: Sequence[Sequence], header: Sequence[str]) -> None:
    cells = [[str(h) for h in header]] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


def read_scores(path, prices_dir=None) -> Dict[str, TickerData]:
    """Parse scores into per-ticker series.

    Two layouts are accepted: a combined ``Ticker,Date,AdjClose,Score`` file,
    or a single-ticker ``Date,Score`` file named after its ticker, whose prices
    come from ``prices_dir/<ticker>.csv``.  In the second layout every trading
    day between the first and last scored date needs a score.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header == SCORE_HEADER:
            rows = _score_rows(path, reader, 4)
        elif header == ["Date", "Score"]:
            rows = _score_rows(path, reader, 2)
        else:
            raise ParseError(f"{path}:1: expected header {','.join(SCORE_HEADER)} or Date,Score")
    if len(header) == 2:
        if prices_dir is None:
            raise UsageError("a Date,Score file needs --prices-dir for the fill prices")
        rows = _attach_prices(path, rows, Path(prices_dir) / f"{path.stem}.csv")
    out = {}
    for t, items in rows.items():
        items.sort()
        dates = [i[0] for i in items]
        if len(set(dates)) != len(dates):
            raise ParseError(f"{path}: duplicate dates for {t}")
        out[t] = TickerData(dates, [i[1] for i in items], [i[2] for i in items])
    if not out:
        raise DataError(f"{path}: no scores")
    return out


def _score_rows(path, reader, width):
    rows: Dict[str, List] = {}
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        try:
            if len(row) != width:
                raise ValueError(f"expected {width} fields, found {len(row)}")
            t, d, p, s = row if width == 4 else (path.stem, row[0], "nan", row[1])
            item = (date.fromisoformat(d.strip()), float(p), float(s))
        except ValueError as err:
            raise ParseError(f"{path}:{lineno}: {err}") from None
        if not (math.isfinite(item[2]) and 0.0 <= item[2] <= 1.0):
            raise ParseError(f"{path}:{lineno}: score must lie in [0, 1]")
        rows.setdefault(t.strip(), []).append(item)
    return rows


def _attach_prices(path, rows, price_file):
    prices = {r.date: r.adj_close for r in read_prices(_require(str(price_file), "price file"))}
    out = {}
    for t, items in rows.items():
        scored = {d: s for d, _, s in items}
        lo, hi = min(scored), max(scored)
        missing = [d for d in prices if lo <= d <= hi and d not in scored]
        if missing:
            raise AlignmentError(f"{path}: no score for trading day(s) "
                                 + ", ".join(d.isoformat() for d in sorted(missing)[:5]))
        unknown = [d for d in scored if d not in prices]
        if unknown:
            raise AlignmentError(f"{path}: scored date(s) missing from {price_file}: "
                                 + ", ".join(d.isoformat() for d in sorted(unknown)[:5]))
        out[t] = [(d, prices[d], s) for d, s in scored.items()]
    return out


def write_scores(path, rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_HEADER)
        for t, d, p, s in rows:
            w.writerow([t, d, repr(float(p)), repr(float(s))])


def _strategy(cfg: RunConfig) -> StrategyConfig:
    s = cfg.strategy
    return StrategyConfig.from_cli(s.name, buy_threshold=s.buy_threshold, sell_threshold=s.sell_threshold,
                                   transaction_cost_rate=s.transaction_cost_rate, shares=s.shares,
                                   start_date=s.start_date, end_date=s.end_date)


def _splits(cfg: RunConfig, archive: Dict[str, LabeledDataset]):
    sp = cfg.split
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {t: split(ds, sp.train_end, sp.val_end, sp.test_end) for t, ds in archive.items()}


def _records_for(cfg: RunConfig, archive: Dict[str, LabeledDataset], which: str):
    """(ticker, record) pairs of one split, or every labeled and tail record for 'all'."""
    if which == "all":
        return [(t, r) for t, ds in sorted(archive.items()) for r in ds.records + ds.unlabeled_tail]
    splits = _splits(cfg, archive)
    return [(t, r) for t in sorted(splits) for r in getattr(splits[t], which).records]


# -- sub-commands -------------------------------------------------------------


def cmd_build_dataset(cfg: RunConfig, args) -> int:
    prices_dir = _require(args.prices_dir, "prices directory")
    tweets = read_tweets(_require(args.tweets_file, "tweets file"), cfg.dataset.min_retweets)
    files = sorted(prices_dir.glob("*.csv"))
    if not files:
        raise DataError(f"no price CSV files in {prices_dir}")
    opts = cfg.dataset
    archive = {}
    for f in files:
        archive[f.stem] = label(align(read_prices(f), tweets), opts.horizon, opts.threshold)
    splits = _splits(cfg, archive)
    train_tokens = [r.tokens for s in splits.values() for r in s.train.records]
    vocab = build_vocab(train_tokens, opts.min_count)
    vocab.save(cfg.out / "vocab.json")
    if args.embeddings_file:
        table = load_embeddings(_require(args.embeddings_file, "embeddings file"), vocab,
                                seed=seed_streams(cfg.seed)["init"])
        np.savez(cfg.out / "embeddings.npz", matrix=table.matrix, pretrained=table.pretrained)
    meta = {"seed": cfg.seed, "horizon": opts.horizon, "threshold": opts.threshold,
            "min_count": opts.min_count, "min_retweets": opts.min_retweets}
    blob = archive_bytes(archive, meta)
    (cfg.out / "dataset.json").write_bytes(blob)
    digest = archive_hash(blob)

    dist_rows = []
    for t in sorted(splits):
        for part in ("train", "val", "test"):
            recs = getattr(splits[t], part).records
            ups = sum(r.label for r in recs)
            covid = sum(1 for r in recs if r.covid_flag)
            dist_rows.append([t, part, ups, len(recs) - ups, covid, len(recs)])
    with open(cfg.out / "distribution.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Ticker", "Split", "Up", "Down", "CovidDays", "Total"])
        w.writerows(dist_rows)
    for t, ds in archive.items():
        write_labeled(cfg.out / f"labeled_{t}.csv", ds.records)

    pooled = [r for ds in archive.values() for r in ds.records]
    corr = None
    if len(pooled) >= 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            corr = correlation_matrix(pooled, FIELDS)
        with open(cfg.out / "correlation.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["Field"] + list(FIELDS))
            for name, row in zip(FIELDS, corr):
                w.writerow([name] + ["" if math.isnan(v) else repr(float(v)) for v in row])
    labeled = sum(len(ds) for ds in archive.values())
    summary = {"archive_sha256": digest, "tickers": sorted(archive), "labeled_days": labeled,
               "unlabeled_tail_days": sum(len(ds.unlabeled_tail) for ds in archive.values()),
               "vocabulary_size": len(vocab), "tweets": len(tweets),
               "up_days": sum(r.label for r in pooled)}
    _write_json(cfg.out / "summary.json", summary)
    if args.figures and corr is not None:
        from . import plotting
        plotting.correlation_heatmap(corr, list(FIELDS), cfg.out / "correlation.png")
    print(f"tickers {len(archive)}  labeled days {labeled}  vocabulary {len(vocab)}")
    print(f"archive sha256 {digest}")
    _print_table([[r[0], r[1], r[2], r[3], r[5]] for r in dist_rows],
                 ["ticker", "split", "up", "down", "total"])
    return EXIT_OK


def _load_dataset_dir(path) -> tuple:
    d = _require(path, "dataset directory")
    archive = load_archive(_require(str(d / "dataset.json"), "dataset archive"))
    vocab = Vocabulary.load(_require(str(d / "vocab.json"), "vocabulary"))
    table = None
    if (d / "embeddings.npz").exists():
        with np.load(d / "embeddings.npz") as z:
            table = EmbeddingTable(z["matrix"].copy(), z["pretrained"].copy())
    return archive, vocab, table


def cmd_train(cfg: RunConfig, args) -> int:
    archive, vocab, table = _load_dataset_dir(args.dataset_dir)
    train_recs = [r for _, r in _records_for(cfg, archive, "train")]
    val_recs = [r for _, r in _records_for(cfg, archive, "val")]
    if not train_recs:
        raise DataError("training split is empty; check the [split] dates")
    normalizer = PriceNormalizer.fit(train_recs)
    mcfg = cfg.model_config()
    streams = seed_streams(cfg.seed)
    if table is None:
        table = EmbeddingTable.random(vocab, mcfg.n_features, streams["init"])
    model = HpsmpModel.create(mcfg, streams["init"], vocab, table, normalizer)
    tcfg = TrainConfig(model=mcfg.kind, lr=cfg.train.lr, batch=cfg.train.batch, epochs=cfg.train.epochs,
                       dropout=cfg.train.dropout, seed=cfg.seed, head=cfg.head,
                       horizon=cfg.dataset.horizon)
    items = examples_from_records(train_recs, vocab, normalizer)
    val_items = examples_from_records(val_recs, vocab, normalizer)
    model.meta = {"version": __version__, "train": cfg.to_dict()["train"]}
    model, curves = train(model, items, config=tcfg, val_items=val_items)
    model.save(cfg.out / "model.npz")
    write_curves(cfg.out / "curves.csv", curves)
    last = curves[-1]
    _write_json(cfg.out / "summary.json",
                {"epochs": len(curves), "train_loss": last.train_loss, "train_acc": last.train_acc,
                 "val_loss": last.val_loss, "val_acc": last.val_acc, "n_train": len(items),
                 "n_val": len(val_items), "model": mcfg.kind, "preset": cfg.preset})
    if args.figures:
        from . import plotting
        plotting.training_curves(curves, cfg.out / "curves.png")
    _print_table([[c.epoch, c.train_loss, c.train_acc, c.val_loss, c.val_acc] for c in curves],
                 ["epoch", "loss", "acc", "val_loss", "val_acc"])
    return EXIT_OK


def _examples(model: HpsmpModel, pairs):
    return examples_from_records([r for _, r in pairs], model.vocab, model.normalizer)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    model = HpsmpModel.load(_require(args.checkpoint_path, "checkpoint"))
    archive, _, _ = _load_dataset_dir(args.dataset_dir)
    pairs = _records_for(cfg, archive, args.split)
    if not pairs:
        raise DataError(f"{args.split} split is empty")
    report = evaluate(model, _examples(model, pairs))
    summary = dict(report.summary(), split=args.split, seed=cfg.seed, config=cfg.to_dict(),
                   model=model.config.to_dict())
    _write_json(cfg.out / "metrics.json", summary)
    write_scores(cfg.out / "predictions.csv",
                 [(t, r.date.isoformat(), r.adj_close, s) for (t, r), s in zip(pairs, report.predictions)])
    if args.figures:
        from . import plotting
        plotting.confusion(report, cfg.out / "confusion.png")
    print(f"{args.split}: n={report.total} accuracy={_fmt(report.accuracy)} "
          f"sensitivity={_fmt(report.sensitivity)} specificity={_fmt(report.specificity)}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    model = HpsmpModel.load(_require(args.checkpoint_path, "checkpoint"))
    archive, _, _ = _load_dataset_dir(args.dataset_dir)
    pairs = _records_for(cfg, archive, args.split)
    if not pairs:
        raise DataError(f"{args.split} split is empty")
    scores = [model.predict(x) for x in _examples(model, pairs)]
    rows = [(t, r.date.isoformat(), r.adj_close, s) for (t, r), s in zip(pairs, scores)]
    write_scores(cfg.out / "scores.csv", rows)
    print(f"wrote {len(rows)} scores for {len({t for t, _ in pairs})} tickers")
    return EXIT_OK


def _portfolio_report(ledgers: Dict) -> dict:
    """Market- and equal-weighted stats when every ledger covers the same dates."""
    names = sorted(ledgers)
    lgs = [ledgers[n] for n in names]
    if len({tuple(l.dates) for l in lgs}) != 1 or not lgs[0].dates:
        return {}
    start = [float(lgs[i].events[0].price) for i in range(len(names))]
    out = {}
    for label_, weights in (("market", market_weights(start)), ("equal", equal_weights(len(names)))):
        ps = portfolio_stats(lgs, weights)
        out[label_] = {"E(R)": ps.expected_return, "Std(R)": None if math.isnan(ps.std_return)
                       else ps.std_return, "profit": ps.total_profit}
    return out


RETURNS_HEADER = ["Ticker", "Date", "Return"]


def _write_returns(out: Path, ledgers: Dict) -> None:
    """Per-trade and daily weighted returns of every ledger, for significance tests."""
    with open(out / "trade_returns.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RETURNS_HEADER)
        for t, lg in sorted(ledgers.items()):
            for (_, sell), r in zip(lg.round_trips(), lg.trade_returns):
                w.writerow([t, sell.date.isoformat(), repr(float(r))])
    with open(out / "daily_returns.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RETURNS_HEADER)
        for t, lg in sorted(ledgers.items()):
            for d, r in zip(lg.dates[1:], lg.weighted_returns):
                w.writerow([t, d.isoformat(), repr(float(r))])


def _run_ledgers(cfg: RunConfig, universe: Dict[str, TickerData], strat: StrategyConfig,
                 signals: Optional[Dict[str, List[str]]] = None, prefix: str = "ledger",
                 figures: bool = False) -> dict:
    ledgers, per = {}, {}
    for t in sorted(universe):
        d = universe[t]
        lg = simulate(d.dates, d.prices, None if signals else d.scores, strat,
                      signals=signals[t] if signals else None)
        ledgers[t] = lg
        lg.write_csv(cfg.out / f"{prefix}_{t}.csv")
        per[t] = lg.summary()
    _write_returns(cfg.out, ledgers)
    if figures:
        from . import plotting
        for t, lg in ledgers.items():
            plotting.ledger_chart(lg, cfg.out / f"{prefix}_{t}.png", title=t)
    total = sum(v["profit"] for v in per.values())
    summary = {"strategy": strat.kind, "buy_threshold": strat.buy_threshold,
               "sell_threshold": strat.sell_threshold,
               "transaction_cost_rate": strat.transaction_cost_rate, "shares": strat.shares,
               "tickers": per, "total_profit": total,
               "portfolio": _portfolio_report(ledgers)}
    _write_json(cfg.out / "summary.json", summary)
    _print_table([[t, s["profit"], s["return"], s["n_trades"], s["sharpe_pct"]] for t, s in per.items()],
                 ["ticker", "profit", "return", "trades", "sharpe"])
    print(f"total profit {_fmt(total)}")
    return summary


def cmd_backtest(cfg: RunConfig, args) -> int:
    universe = read_scores(_require(args.scores_file, "scores file"), args.prices_dir)
    _run_ledgers(cfg, universe, _strategy(cfg), figures=args.figures)
    return EXIT_OK


def cmd_mc(cfg: RunConfig, args) -> int:
    universe = read_scores(_require(args.scores_file, "scores file"), args.prices_dir)
    seed = seed_streams(cfg.seed)["montecarlo"]
    results = monte_carlo(universe, _strategy(cfg), runs=args.runs, pick=args.pick, seed=seed)
    write_monte_carlo(cfg.out / "mc.csv", results)
    profits = np.array([r["profit"] for r in results])
    summary = {"runs": args.runs, "pick": args.pick, "mean_profit": float(profits.mean()),
               "std_profit": float(profits.std(ddof=1)) if profits.size > 1 else None,
               "min_profit": float(profits.min()), "max_profit": float(profits.max()),
               "positive_fraction": float((profits > 0).mean())}
    _write_json(cfg.out / "summary.json", summary)
    if args.figures:
        from . import plotting
        plotting.profit_histogram(profits, cfg.out / "mc.png")
    print(f"runs {args.runs}  mean profit {_fmt(summary['mean_profit'])}  "
          f"std {_fmt(summary['std_profit'])}  positive {_fmt(summary['positive_fraction'])}")
    return EXIT_OK


def cmd_baseline(cfg: RunConfig, args) -> int:
    from . import indicators
    prices_dir = _require(args.prices_dir, "prices directory")
    files = sorted(prices_dir.glob("*.csv"))
    if not files:
        raise DataError(f"no price CSV files in {prices_dir}")
    universe, signals = {}, {}
    for f in files:
        recs = read_prices(f)
        dates = [r.date for r in recs]
        closes = [r.adj_close for r in recs]
        if args.indicator == "macd":
            state = indicators.macd(closes, args.fast, args.slow, args.signal)
            acts = state.actions
            indicators.write_macd(cfg.out / f"macd_{f.stem}.csv", dates, state)
            if args.figures:
                from . import plotting
                plotting.macd_chart(dates, state, cfg.out / f"macd_{f.stem}.png")
        else:
            acts = indicators.sma_signal(closes, args.window)
            if not acts:
                raise DataError(f"{f}: series shorter than SMA window {args.window}")
            indicators.write_sma(cfg.out / f"sma_{f.stem}.csv", dates, indicators.sma(closes, args.window), acts)
        universe[f.stem] = TickerData(dates, closes, [0.5] * len(closes))
        signals[f.stem] = acts
    strat = StrategyConfig("fifty_fifty", transaction_cost_rate=cfg.strategy.transaction_cost_rate,
                           shares=cfg.strategy.shares, start_date=cfg.strategy.start_date,
                           end_date=cfg.strategy.end_date)
    _run_ledgers(cfg, universe, strat, signals, prefix=f"ledger_{args.indicator}", figures=args.figures)
    return EXIT_OK


def _returns(run_dir: Path, kind: str) -> List[float]:
    path = _require(str(run_dir / f"{kind}_returns.csv"), f"{kind} returns of {run_dir}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if [h.strip() for h in next(reader, [])] != RETURNS_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(RETURNS_HEADER)}")
        out = []
        for lineno, row in enumerate(reader, 2):
            try:
                out.append(float(row[2]))
            except (IndexError, ValueError):
                raise ParseError(f"{path}:{lineno}: bad return value") from None
    return out


def cmd_ttest(cfg: RunConfig, args) -> int:
    a = _returns(_require(args.a_dir, "first backtest directory"), args.returns)
    b = _returns(_require(args.b_dir, "second backtest directory"), args.returns)
    if len(a) < 2 or len(b) < 2:
        raise DataError(f"each run needs at least 2 {args.returns} returns (got {len(a)} and {len(b)})")
    res = t_test(a, b, alternative=args.alternative)
    out = {"t": res.t_value, "p": res.p_value, "df": res.df, "alternative": res.alternative,
           "reject_at_95": res.reject_at_95, "returns": args.returns, "n_a": len(a), "n_b": len(b)}
    _write_json(cfg.out / "ttest.json", out)
    print(f"t={_fmt(res.t_value)} df={_fmt(res.df)} p={_fmt(res.p_value)} ({res.alternative}) "
          f"reject@95={res.reject_at_95}")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    from .gradsuite import run_all
    rows, failed = [], []
    for name, seed, rep in run_all(seeds=tuple(range(args.seeds)), tol=args.tol):
        rows.append([name, seed, rep.max_rel_error, rep.checked, rep.passed])
        if not rep.passed:
            failed.append(name)
    with open(cfg.out / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Case", "Seed", "MaxRelError", "Checked", "Passed"])
        for r in rows:
            w.writerow([r[0], r[1], repr(float(r[2])), r[3], r[4]])
    worst = {}
    for name, _, err, checked, ok in rows:
        prev = worst.get(name, (0.0, 0, True))
        worst[name] = (max(prev[0], err), prev[1] + checked, prev[2] and ok)
    _print_table([[n, e, c, "pass" if ok else "FAIL"] for n, (e, c, ok) in worst.items()],
                 ["case", "max_rel_error", "coords", "status"])
    print(f"{len(worst) - len(set(failed))}/{len(worst)} cases pass at tol {args.tol:g}")
    if failed:
        raise NumericalError("gradient check failed: " + ", ".join(sorted(set(failed))))
    return EXIT_OK


COMMANDS = {
    "build-dataset": cmd_build_dataset, "train": cmd_train, "evaluate": cmd_evaluate,
    "predict": cmd_predict, "backtest": cmd_backtest, "mc": cmd_mc, "baseline": cmd_baseline,
    "ttest": cmd_ttest, "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help="output directory (env HPSMP_OUT when omitted)")
    common.add_argument("--figures", action="store_true", help="also render PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    model = _Parser(add_help=False)
    model.add_argument("--model", choices=sorted(MODEL_KINDS))
    model.add_argument("--head", choices=("sigmoid", "relu"))
    model.add_argument("--preset", choices=PRESETS, help="architecture scale (default full)")

    strat = _Parser(add_help=False)
    strat.add_argument("--strategy", choices=sorted(CLI_STRATEGIES))
    strat.add_argument("--cost", dest="transaction_cost_rate", type=float, help="cost rate per fill")
    strat.add_argument("--shares", type=int)
    strat.add_argument("--buy-threshold", type=float)
    strat.add_argument("--sell-threshold", type=float)

    p = _Parser(prog="hpsmp", description="Stock movement prediction and strategy backtesting.")
    p.add_argument("--version", action="version", version=f"hpsmp {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build-dataset", parents=[common], help="align prices and tweets, label days")
    s.add_argument("--prices-dir", dest="prices_dir", required=True)
    s.add_argument("--tweets-file", dest="tweets_file", required=True)
    s.add_argument("--embeddings-file", dest="embeddings_file")

    s = sub.add_parser("train", parents=[common, model], help="train a model")
    s.add_argument("--dataset-dir", dest="dataset_dir", required=True)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch", type=int)
    s.add_argument("--dropout", type=float)

    for name, text in (("evaluate", "confusion-matrix metrics"), ("predict", "write movement scores")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--checkpoint", dest="checkpoint_path", required=True)
        s.add_argument("--dataset-dir", dest="dataset_dir", required=True)
        s.add_argument("--split", choices=("train", "val", "test", "all"), default="test")

    s = sub.add_parser("backtest", parents=[common, strat], help="simulate a strategy on scores")
    s.add_argument("--scores-file", dest="scores_file", required=True)
    s.add_argument("--prices-dir", dest="prices_dir", help="prices for a Date,Score file")

    s = sub.add_parser("mc", parents=[common, strat], help="Monte Carlo over random portfolios")
    s.add_argument("--scores-file", dest="scores_file", required=True)
    s.add_argument("--prices-dir", dest="prices_dir", help="prices for a Date,Score file")
    s.add_argument("--runs", type=int, default=100)
    s.add_argument("--pick", type=int, default=6)

    s = sub.add_parser("baseline", parents=[common, strat], help="MACD or SMA crossover baseline")
    s.add_argument("--prices-dir", dest="prices_dir", required=True)
    s.add_argument("--indicator", choices=("macd", "sma"), default="macd")
    s.add_argument("--fast", type=int, default=12)
    s.add_argument("--slow", type=int, default=26)
    s.add_argument("--signal", type=int, default=9)
    s.add_argument("--window", type=int, default=5)

    s = sub.add_parser("ttest", parents=[common], help="Welch t-test between two backtest runs")
    s.add_argument("--a-dir", dest="a_dir", required=True)
    s.add_argument("--b-dir", dest="b_dir", required=True)
    s.add_argument("--returns", choices=("trade", "daily"), default="trade")
    s.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--seeds", type=int, default=1)
    return p


def main(argv: Optional[Sequence[str]] = None, environ=None) -> int:
    environ = os.environ if environ is None else environ
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve(vars(args), environ)
        cfg.out.mkdir(parents=True, exist_ok=True)
        _write_run(cfg)
        return COMMANDS[args.command](cfg, args)
    except SystemExit as exc:  # --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, KeyError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
