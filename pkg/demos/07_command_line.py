"""The same chain as ``05_train_and_synthesize.py`` through the command line.

Each subcommand writes a frozen ``config.toml`` next to its output.  The
equivalent shell session is::

    python -m gesturediff prepare --config run.toml --out dataset
    python -m gesturediff train --config run.toml --dataset dataset --out run
    python -m gesturediff synthesize --checkpoint run/checkpoint.gdck --audio talk.wav --out talk.bvh
    python -m gesturediff evaluate --checkpoint run/checkpoint.gdck --out eval
    python -m gesturediff ablate --config run.toml --dataset dataset --n-steps 1,10,50 --out ablation
"""
# %%
import tempfile
from pathlib import Path

from gesturediff.cli import main
from gesturediff.synthetic import write_synthetic_take

work = Path(tempfile.mkdtemp(prefix="gesturediff-cli-"))
takes = [write_synthetic_take(str(work), f"take{i}", 8.0, seed=i) for i in range(3)]
(work / "run.toml").write_text(f"""seed = 0
[data]
takes = [{{bvh = "take0.bvh", wav = "take0.wav"}}, {{bvh = "take1.bvh", wav = "take1.wav"}}]
eval_takes = [{{bvh = "take2.bvh", wav = "take2.wav"}}]
[model]
hidden = 16
layers = 1
width = 16
blocks = 2
emb_dim = 8
[schedule]
n_steps = 10
[train]
batch_size = 4
max_epochs = 3
[metrics]
runs = 2
""")
cfg = str(work / "run.toml")

# %%
main(["prepare", "--config", cfg, "--out", str(work / "dataset")])
main(["train", "--config", cfg, "--dataset", str(work / "dataset"), "--out", str(work / "run")])
ckpt = str(work / "run" / "checkpoint.gdck")
main(["synthesize", "--checkpoint", ckpt, "--audio", takes[2]["wav"], "--frames", "100",
      "--seed", "3", "--out", str(work / "talk.bvh")])
main(["evaluate", "--checkpoint", ckpt, "--out", str(work / "eval")])
print((work / "eval" / "report.txt").read_text())

# %% Step-count ablation: synthesis time grows with the number of diffusion steps
main(["ablate", "--config", cfg, "--dataset", str(work / "dataset"), "--n-steps", "1,10,50",
      "--epochs", "1", "--frames", "20", "--out", str(work / "ablation")])
print((work / "ablation" / "ablation.tsv").read_text())
