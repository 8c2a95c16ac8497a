"""``finqnlp`` command line: gen-data, parse, train, eval.

Every command except ``parse`` (which only prints) writes its outputs into
a fresh run directory ``<runs-root>/<timestamp>-seed<seed>-<command>``
together with ``manifest.json``.  Exit codes: 0 success, 2 usage,
3 environment, 4 data or grammar, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import data
from .exceptions import FinQNLPError, MissingDependency

logger = logging.getLogger("finqnlp")

EXIT_USAGE = 2
EXIT_ENVIRONMENT = 3


def content_hash(path):
    """Git blob hash of a file, so it matches ``git hash-object``."""
    blob = Path(path).read_bytes()
    return "sha1:" + hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _write_json_atomic(path, payload):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, default=str))
    os.replace(tmp, path)


@dataclass
class RunManifest:
    command: list
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)  # path -> content hash
    started: str = field(default_factory=_now)
    finished: str | None = None
    status: str = "running"
    exit_code: int | None = None
    outputs: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def write(self, run_dir):
        _write_json_atomic(Path(run_dir) / "manifest.json", asdict(self))


def make_run_dir(root, seed, command):
    stamp = time.strftime("%Y%m%dT%H%M%S")
    base = Path(root) / f"{stamp}-seed{seed}-{command}"
    run_dir, k = base, 1
    while run_dir.exists():
        run_dir = base.with_name(f"{base.name}.{k}")
        k += 1
    run_dir.mkdir(parents=True)
    return run_dir


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args, run):
    config = args.gen_config
    run.manifest.config["generator"] = {**asdict(config), "target_shares": list(config.target_shares)}
    if args.llm:
        client = data.ChatClient(data.LLMConfig(endpoint=args.endpoint, model=args.llm_model))
        _, dataset = data.llm_generate(client, config.complexity, args.rounds, archive_dir=run.dir / "llm")
        run.manifest.details["unparseable_lines"] = len(dataset.report.get("unparseable", []))
        dataset = dataset[: args.n]
    else:
        dataset = data.generate_synthetic(config)
    outputs = [run.dir / "data.jsonl"]
    if args.out:
        outputs.append(Path(args.out))
    for path in outputs:
        data.save_jsonl(dataset, path)
    run.manifest.outputs += [str(p) for p in outputs]
    st = data.stats(dataset)
    run.manifest.details["stats"] = asdict(st)
    print(st.table(config.complexity))
    print(f"wrote {len(dataset)} sentences to {outputs[-1]}")


def gen_config(args):
    """Flags override the ``--config`` JSON file, which overrides the defaults."""
    fields = json.loads(Path(args.config).read_text()) if args.config else {}
    fields["n_sentences"] = args.n
    for flag, name in (("complexity", "complexity"), ("shares", "target_shares"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            fields[name] = getattr(args, flag)
    fields["target_shares"] = tuple(fields.get("target_shares", data.GenConfig.target_shares))
    try:
        return data.GenConfig(**fields)
    except TypeError as exc:
        raise ValueError(f"bad generator config: {exc}") from exc


def cmd_parse(args):
    from .discocat import AnsatzConfig, bend_rewrite, build_diagram, compile_diagram
    from .grammar import Lexicon, assign_types, reduce, tokenize

    lexicon = Lexicon.load(args.lexicon) if args.lexicon else None
    typed = assign_types(tokenize(args.sentence), lexicon, fallback=not args.no_fallback)
    if args.stage == "types":
        print(" | ".join(str(t) for _, t in typed))
        return
    derivation = reduce(typed)
    if args.stage == "derivation":
        print(derivation.to_json(indent=2))
        return
    diagram = build_diagram(derivation)
    if not args.no_rewrite:
        diagram = bend_rewrite(diagram)
    if args.stage == "diagram":
        print(json.dumps(diagram.to_dict(), indent=2))
        return
    ansatz = AnsatzConfig({"n": args.qubits_noun, "s": args.qubits_sentence}, args.layers)
    compiled = compile_diagram(diagram, ansatz)
    print(json.dumps(compiled.to_dict(), indent=2))


def cmd_train(args, run):
    import torch

    from .train import TrainConfig, train_model

    if args.threads:
        torch.set_num_threads(args.threads)
    dataset = data.load_jsonl(args.data)
    run.manifest.inputs[str(args.data)] = content_hash(args.data)
    config = TrainConfig(args.epochs, args.batch_size, args.lr, args.seed, tuple(args.split), args.early_stop)
    run.manifest.config["train"] = config.to_dict()
    result = train_model(args.model, dataset, config, out_dir=run.dir)
    run.manifest.config["model"] = {k: v for k, v in result.model.get_params().items() if k != "lexicon"}
    run.manifest.details["counts"] = result.counts
    run.manifest.outputs += [str(run.dir / n) for n in ("curve.csv", "model.ckpt", "metrics.json")]
    if args.plot:
        path = run.dir / "curve.svg"
        plot_curve(result.history, path)
        run.manifest.outputs.append(str(path))
    last = result.history[-1] if result.history else None
    if last is not None:
        print(f"epoch {last.epoch}: train loss {last.train_loss:.4f} acc {last.train_acc:.3f} | "
              f"val loss {last.val_loss:.4f} acc {last.val_acc:.3f}")
    if result.test is not None:
        print(f"test accuracy {result.test.accuracy:.3f}")
    print(f"outputs in {run.dir}")


def cmd_eval(args, run):
    from .estimators import DisCoCatClassifier, load_checkpoint
    from .train import evaluate

    model = load_checkpoint(args.checkpoint)
    dataset = data.load_jsonl(args.data)
    run.manifest.inputs[str(args.checkpoint)] = content_hash(args.checkpoint)
    run.manifest.inputs[str(args.data)] = content_hash(args.data)
    counts = {"input": len(dataset)}
    if isinstance(model, DisCoCatClassifier):
        dataset = data.binarize(dataset)
        counts["dropped_neutral"] = dataset.report["dropped_neutral"]
    result = evaluate(model, dataset.texts, dataset.labels)
    payload = {"counts": counts, **result.to_dict()}
    _write_json_atomic(run.dir / "metrics.json", payload)
    run.manifest.outputs.append(str(run.dir / "metrics.json"))
    run.manifest.details["accuracy"] = result.accuracy
    print(json.dumps(payload))


def plot_curve(history, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise MissingDependency("--plot needs matplotlib (pip install 'artifact[plot]')") from exc
    epochs = [r.epoch for r in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [r.train_loss for r in history], label="train")
    ax_loss.plot(epochs, [r.val_loss for r in history], label="validation")
    ax_loss.set(xlabel="epoch", ylabel="loss")
    ax_acc.plot(epochs, [r.train_acc for r in history], label="train")
    ax_acc.plot(epochs, [r.val_acc for r in history], label="validation")
    ax_acc.set(xlabel="epoch", ylabel="accuracy", ylim=(0, 1))
    ax_acc.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# -- wiring ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="finqnlp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def runs_root(p):
        p.add_argument("--runs-root", default="runs", help="parent of the per-run output directory")

    g = sub.add_parser("gen-data", help="generate a labelled sentence corpus")
    g.add_argument("--complexity", choices=("low", "moderate"), default=None, help="default: low")
    g.add_argument("--n", type=int, required=True, help="number of sentences")
    g.add_argument("--seed", type=int, default=None, help="default: 0")
    g.add_argument("--shares", type=float, nargs=3, default=None, metavar=("NEG", "NEU", "POS"),
                   help="target class shares (default: 0.34 0.18 0.48)")
    g.add_argument("--config", help="JSON file with generator settings; flags take precedence")
    g.add_argument("--out", help="also write the JSONL here")
    g.add_argument("--llm", action="store_true", help="query a chat-completion endpoint instead of the templates")
    g.add_argument("--endpoint", help="chat-completions URL (default: $FINQNLP_LLM_ENDPOINT)")
    g.add_argument("--llm-model", default="gpt-3.5-turbo")
    g.add_argument("--rounds", type=int, default=1, help="number of LLM queries")
    runs_root(g)

    p = sub.add_parser("parse", help="show the types, derivation, diagram or circuit of one sentence")
    p.add_argument("sentence")
    p.add_argument("--stage", choices=("types", "derivation", "diagram", "circuit"), default="derivation")
    p.add_argument("--lexicon", help="TSV lexicon (default: the shipped one)")
    p.add_argument("--no-fallback", action="store_true", help="fail on words missing from the lexicon")
    p.add_argument("--no-rewrite", action="store_true", help="keep cups instead of bending states into effects")
    p.add_argument("--qubits-noun", type=int, default=1)
    p.add_argument("--qubits-sentence", type=int, default=1)
    p.add_argument("--layers", type=int, default=None, help="IQP layers (default: one per qubit)")

    t = sub.add_parser("train", help="train a model and save curve, checkpoint and metrics")
    t.add_argument("--model", choices=("lstm", "qlstm", "discocat"), required=True)
    t.add_argument("--data", required=True, help="JSONL corpus")
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lr", type=float, default=None, help="learning rate (default depends on the model)")
    t.add_argument("--split", type=float, nargs=3, default=(0.8, 0.1, 0.1), metavar=("TRAIN", "VAL", "TEST"))
    t.add_argument("--early-stop", type=int, default=None, metavar="PATIENCE")
    t.add_argument("--plot", action="store_true", help="also write curve.svg")
    t.add_argument("--threads", type=int, default=None, help="cap torch worker threads")
    t.add_argument("--out-dir", dest="runs_root", default="runs", help="parent of the run directory")

    e = sub.add_parser("eval", help="score a checkpoint on a JSONL corpus")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    runs_root(e)
    return parser


class _Run:
    def __init__(self, args, argv):
        seed = getattr(args, "seed", 0)
        self.dir = make_run_dir(args.runs_root, seed, args.command)
        config = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "gen_config")}
        self.manifest = RunManifest(command=["finqnlp", *argv], config=config, seed=seed)
        self.manifest.outputs.append(str(self.dir / "manifest.json"))
        self.manifest.write(self.dir)

    def finish(self, code):
        self.manifest.finished = _now()
        self.manifest.exit_code = code
        self.manifest.status = "ok" if code == 0 else "failed"
        self.manifest.write(self.dir)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    run = None
    try:
        if args.command == "parse":
            cmd_parse(args)
            return 0
        if args.command == "gen-data":
            args.gen_config = gen_config(args)
            args.seed = args.gen_config.seed
        run = _Run(args, argv)
        {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval}[args.command](args, run)
        code = 0
    except FinQNLPError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_ENVIRONMENT
    except ValueError as exc:  # bad flag combinations caught by config validation
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    if run is not None:
        run.finish(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
