"""Training loop and CLI.

Optimizes the generator with weighted L1 + MS-SSIM + relativistic
adversarial losses (Adam, cosine-annealed learning rate). Every step is
appended to a JSON-lines log, the first line echoing the full config.
Training is deterministic under a fixed seed up to torch backend
nondeterminism (single CPU process is reproducible).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from mfsr_gan.data import BurstFolder
from mfsr_gan.losses import cosine_lr, discriminator_loss, generator_loss, ms_ssim
from mfsr_gan.model import Discriminator, Generator


@dataclass
class TrainConfig:
    dataset: str
    out_dir: str
    steps: int = 2000
    batch_size: int = 4
    lr_max: float = 5e-4
    lr_min: float = 5e-6
    w_l1: float = 1.0
    w_ms_ssim: float = 0.1
    w_adv: float = 0.005
    seed: int = 0
    channels: int = 64
    growth: int = 32
    num_rrdb: int = 3
    disc_depth: int = 3
    checkpoint_every: int = 500
    target_l1: float | None = None  # stop early once mean |pred - gt| dips below
    device: str = "cpu"


def _batch(dataset: BurstFolder, indices) -> tuple[torch.Tensor, torch.Tensor]:
    frames, gts = zip(*(dataset[int(i)] for i in indices))
    return torch.stack(frames), torch.stack(gts)


def _save_checkpoint(path: Path, generator, discriminator, config, step: int) -> None:
    torch.save(
        {
            "step": step,
            "config": asdict(config),
            "generator": generator.state_dict(),
            "discriminator": None if discriminator is None else discriminator.state_dict(),
        },
        path,
    )


def train(config: TrainConfig) -> dict:
    torch.manual_seed(config.seed)
    np.random.seed(config.seed % 2**32)
    device = torch.device(config.device)

    dataset = BurstFolder(config.dataset)
    frames_per_sample = dataset.records[0].frames.shape[0]

    generator = Generator(
        channels=config.channels,
        growth=config.growth,
        frames=frames_per_sample,
        num_rrdb=config.num_rrdb,
        cfa=dataset.cfa,
    ).to(device)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr_max)

    adversarial = config.w_adv > 0
    discriminator = None
    opt_d = None
    if adversarial:
        discriminator = Discriminator(depth=config.disc_depth).to(device)
        opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr_max)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"
    sampler = torch.Generator().manual_seed(config.seed)

    start = time.monotonic()
    last = {}
    stopped_step = None
    with log_path.open("w") as log:
        log.write(json.dumps({"event": "config", **asdict(config)}) + "\n")
        for step in range(config.steps):
            lr = cosine_lr(step, config.steps, config.lr_max, config.lr_min)
            for group in opt_g.param_groups:
                group["lr"] = lr
            if opt_d is not None:
                for group in opt_d.param_groups:
                    group["lr"] = lr

            indices = torch.randint(len(dataset), (config.batch_size,), generator=sampler)
            frames, gt = _batch(dataset, indices)
            frames, gt = frames.to(device), gt.to(device)

            pred = generator(frames)

            entry = {"step": step, "lr": lr}
            if adversarial:
                opt_d.zero_grad()
                d_loss = discriminator_loss(discriminator(gt), discriminator(pred.detach()))
                d_loss.backward()
                opt_d.step()
                entry["adv_d"] = float(d_loss.detach())

            l1 = (pred - gt).abs().mean()
            total = config.w_l1 * l1
            entry["l1"] = float(l1.detach())
            if config.w_ms_ssim > 0:
                ms_loss = 1.0 - ms_ssim(pred, gt)
                total = total + config.w_ms_ssim * ms_loss
                entry["ms_ssim_loss"] = float(ms_loss.detach())
            if adversarial:
                g_adv = generator_loss(discriminator(gt), discriminator(pred))
                total = total + config.w_adv * g_adv
                entry["adv_g"] = float(g_adv.detach())
            entry["total"] = float(total.detach())

            opt_g.zero_grad()
            total.backward()
            opt_g.step()

            log.write(json.dumps(entry) + "\n")
            last = entry

            if not math.isfinite(entry["total"]):
                raise RuntimeError(f"non-finite loss at step {step}: {entry}")
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                _save_checkpoint(
                    out_dir / f"checkpoint_{step + 1:06d}.pt",
                    generator,
                    discriminator,
                    config,
                    step + 1,
                )
            if config.target_l1 is not None and entry["l1"] < config.target_l1:
                stopped_step = step
                log.write(
                    json.dumps({"event": "early_stop", "step": step, "l1": entry["l1"]})
                    + "\n"
                )
                break

    final_path = out_dir / "checkpoint_final.pt"
    _save_checkpoint(final_path, generator, discriminator, config, last.get("step", -1) + 1)
    return {
        "steps_run": last.get("step", -1) + 1,
        "stopped_early": stopped_step is not None,
        "final": last,
        "seconds": time.monotonic() - start,
        "checkpoint": str(final_path),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfsr-gan", description="Train the burst super-resolution GAN"
    )
    parser.add_argument("--dataset", required=True, help="dataset directory")
    parser.add_argument("--out", dest="out_dir", required=True, help="output directory")
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--batch-size", type=int, default=4)
    parser.add_argument("--lr-max", type=float, default=5e-4)
    parser.add_argument("--lr-min", type=float, default=5e-6)
    parser.add_argument("--w-l1", type=float, default=1.0)
    parser.add_argument("--w-ms-ssim", type=float, default=0.1)
    parser.add_argument("--w-adv", type=float, default=0.005)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--channels", type=int, default=64)
    parser.add_argument("--growth", type=int, default=32)
    parser.add_argument("--num-rrdb", type=int, default=3)
    parser.add_argument("--disc-depth", type=int, default=3)
    parser.add_argument("--checkpoint-every", type=int, default=500)
    parser.add_argument("--target-l1", type=float, default=None)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    summary = train(TrainConfig(**vars(args)))
    print(json.dumps(summary, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
