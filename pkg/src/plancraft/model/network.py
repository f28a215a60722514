"""Object-token transformer planner: tokenizer, backbone, decoders.

All computation runs in float64 on CPU: attention sums then reorder-commute
far below the 1e-6 permutation tolerance, and checkpoints quantize to
float32 only at the serialization boundary.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..plan import PATH_POINT_COUNT, WAYPOINT_COUNT
from .config import ModelConfig
from .features import N_CLASSES, N_OBJECT_FEATURES

DTYPE = torch.float64


class NumericalFault(RuntimeError):
    """Non-finite activations; carries the offending stage name."""


def _check_finite(x: torch.Tensor, stage: str):
    if not torch.isfinite(x).all():
        raise NumericalFault(f"non-finite activations at {stage}")


class ClassProjection(nn.Module):
    """A separate linear projection per object class."""

    def __init__(self, d_model: int):
        super().__init__()
        self.weight = nn.Parameter(
            torch.randn(N_CLASSES, N_OBJECT_FEATURES, d_model, dtype=DTYPE)
            / math.sqrt(N_OBJECT_FEATURES))
        self.bias = nn.Parameter(torch.zeros(N_CLASSES, d_model, dtype=DTYPE))

    def forward(self, feats: torch.Tensor, classes: torch.Tensor) -> torch.Tensor:
        # feats (B, N, 7), classes (B, N) -> (B, N, D)
        w = self.weight[classes]            # (B, N, 7, D)
        b = self.bias[classes]              # (B, N, D)
        return torch.einsum("bnf,bnfd->bnd", feats, w) + b


class StridedConv(nn.Module):
    """3x3 stride-2 convolution via unfold + matmul (fast float64 path)."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.c_in = c_in
        self.c_out = c_out
        self.weight = nn.Parameter(
            torch.randn(c_out, c_in * 9, dtype=DTYPE) / math.sqrt(c_in * 9))
        self.bias = nn.Parameter(torch.zeros(c_out, dtype=DTYPE))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        cols = F.unfold(x, kernel_size=3, stride=2, padding=1)   # (B, C*9, L)
        out = self.weight @ cols + self.bias[:, None]            # (B, c_out, L)
        return out.reshape(b, self.c_out, h // 2, w // 2)


class RasterEncoder(nn.Module):
    """Strided conv stack collapsing the 128x128 raster to one token.

    The one-hot input is average-pooled 2x first (markings survive as
    fractional occupancy); four stride-2 convs then reduce 64x64 to 4x4.
    """

    def __init__(self, d_model: int):
        super().__init__()
        chans = [4,
                 max(2, d_model // 16), max(2, d_model // 8),
                 max(4, d_model // 4), max(4, d_model // 4)]
        self.convs = nn.ModuleList(
            [StridedConv(chans[i], chans[i + 1]) for i in range(4)])
        self.proj = nn.Linear(chans[-1] * 16, d_model, dtype=DTYPE)

    def forward(self, raster: torch.Tensor) -> torch.Tensor:
        x = F.avg_pool2d(raster, 2)
        for conv in self.convs:
            x = F.gelu(conv(x))
        return self.proj(x.flatten(1))       # (B, D)


class SelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model, dtype=DTYPE)
        self.out = nn.Linear(d_model, d_model, dtype=DTYPE)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (b, t, self.n_heads, self.d_head)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        y = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.out(y)


class TransformerLayer(nn.Module):
    def __init__(self, d_model: int, n_heads: int, ffn_mult: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model, dtype=DTYPE)
        self.attn = SelfAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model, dtype=DTYPE)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, ffn_mult * d_model, dtype=DTYPE),
            nn.GELU(),
            nn.Linear(ffn_mult * d_model, d_model, dtype=DTYPE),
        )

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), key_mask)
        return x + self.ffn(self.ln2(x))


class GRUCell(nn.Module):
    """Explicit GRU cell (r/z/n gate order, torch convention)."""

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.hidden_size = hidden_size
        scale = 1.0 / math.sqrt(hidden_size)
        self.weight_ih = nn.Parameter(
            torch.randn(3 * hidden_size, input_size, dtype=DTYPE) * scale)
        self.weight_hh = nn.Parameter(
            torch.randn(3 * hidden_size, hidden_size, dtype=DTYPE) * scale)
        self.bias_ih = nn.Parameter(torch.zeros(3 * hidden_size, dtype=DTYPE))
        self.bias_hh = nn.Parameter(torch.zeros(3 * hidden_size, dtype=DTYPE))

    def forward(self, x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        gi = x @ self.weight_ih.T + self.bias_ih
        gh = h @ self.weight_hh.T + self.bias_hh
        i_r, i_z, i_n = gi.chunk(3, dim=-1)
        h_r, h_z, h_n = gh.chunk(3, dim=-1)
        r = torch.sigmoid(i_r + h_r)
        z = torch.sigmoid(i_z + h_z)
        n = torch.tanh(i_n + r * h_n)
        return (1.0 - z) * n + z * h


def cumsum_points(deltas: torch.Tensor) -> torch.Tensor:
    """point[i] = sum_{j<=i} delta[j], summed left to right."""
    return torch.cumsum(deltas, dim=-2)


class LinearPointDecoder(nn.Module):
    """Per-token linear regression of deltas, cumulatively summed.

    The bias starts at one meter of forward motion: deltas of both point
    representations are small forward steps by construction, so the head
    begins near the output manifold instead of at the origin.
    """

    def __init__(self, d_model: int):
        super().__init__()
        self.proj = nn.Linear(d_model, 2, dtype=DTYPE)
        with torch.no_grad():
            self.proj.bias.copy_(torch.tensor([1.0, 0.0], dtype=DTYPE))

    def forward(self, tokens: torch.Tensor, target: torch.Tensor):
        deltas = self.proj(tokens)            # (B, H, 2)
        return cumsum_points(deltas), deltas


class MultiTokenGRUDecoder(nn.Module):
    """GRU over one transformer token per point; target point seeds the
    initial hidden state; emits absolute points."""

    def __init__(self, d_model: int):
        super().__init__()
        self.init_h = nn.Linear(2, d_model, dtype=DTYPE)
        self.cell = GRUCell(d_model, d_model)
        self.proj = nn.Linear(d_model, 2, dtype=DTYPE)

    def forward(self, tokens: torch.Tensor, target: torch.Tensor):
        h = self.init_h(target)
        points = []
        for i in range(tokens.shape[1]):
            h = self.cell(tokens[:, i], h)
            points.append(self.proj(h))
        pts = torch.stack(points, dim=1)
        return pts, pts


class SingleTokenGRUDecoder(nn.Module):
    """Autoregressive GRU seeded by a single token; each step consumes the
    previous point concatenated with the target point and emits a delta."""

    def __init__(self, d_model: int, n_points: int):
        super().__init__()
        self.n_points = n_points
        self.cell = GRUCell(4, d_model)
        self.proj = nn.Linear(d_model, 2, dtype=DTYPE)

    def forward(self, token: torch.Tensor, target: torch.Tensor):
        b = token.shape[0]
        h = token
        prev = torch.zeros(b, 2, dtype=DTYPE, device=token.device)
        points = []
        for _ in range(self.n_points):
            h = self.cell(torch.cat([prev, target], dim=-1), h)
            prev = prev + self.proj(h)
            points.append(prev)
        pts = torch.stack(points, dim=1)
        return pts, pts


def make_decoder(generator: str, d_model: int, n_points: int):
    if generator == "linear":
        return LinearPointDecoder(d_model)
    if generator == "gru_multi":
        return MultiTokenGRUDecoder(d_model)
    if generator == "gru_single":
        return SingleTokenGRUDecoder(d_model, n_points)
    raise ValueError(generator)


class PlannerNetwork(nn.Module):
    """Full planner: tokenize -> transformer encoder -> point/speed heads."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model

        self.object_proj = ClassProjection(d)
        self.route_proj = nn.Linear(2 * 20, d, dtype=DTYPE)
        self.speed_limit_embed = nn.Embedding(4, d)
        self.speed_limit_embed.weight.data = self.speed_limit_embed.weight.data.to(DTYPE)
        self.raster_encoder = RasterEncoder(d)
        if config.include_ego_speed:
            self.ego_speed_proj = nn.Linear(1, d, dtype=DTYPE)

        self.modes = []                      # (name, n_points)
        if config.predicts_path:
            self.modes.append(("path", PATH_POINT_COUNT))
        if config.predicts_waypoints:
            self.modes.append(("wp", WAYPOINT_COUNT))

        multi = config.generator in ("linear", "gru_multi")
        slot_counts = [(n if multi else 1) for _, n in self.modes]
        if config.predicts_speed:
            slot_counts.append(1)            # classifier slot
        # Unit-scale init: output slots must be distinguishable queries from
        # the first step or the per-point heads differentiate very slowly.
        self.slot_embed = nn.Parameter(
            torch.randn(sum(slot_counts), d, dtype=DTYPE))
        self._slot_counts = slot_counts

        self.layers = nn.ModuleList(
            TransformerLayer(d, config.n_heads, config.ffn_mult)
            for _ in range(config.n_layers))
        self.final_ln = nn.LayerNorm(d, dtype=DTYPE)

        self.decoders = nn.ModuleDict({
            name: make_decoder(config.generator, d, n) for name, n in self.modes})
        if config.predicts_speed:
            self.speed_head = nn.Linear(d, len(config.speed_bins), dtype=DTYPE)

    # -- tokenization --------------------------------------------------------

    def tokenize(self, batch: dict) -> tuple[torch.Tensor, torch.Tensor]:
        """Assemble the token sequence and its validity mask.

        Order: object tokens (padded), route, speed limit, raster,
        [ego speed], output slots.  Object tokens carry no positional
        encoding; slots use learned embeddings.
        """
        obj = self.object_proj(batch["obj_feats"], batch["obj_class"])
        b = obj.shape[0]
        context = [
            self.route_proj(batch["route"]).unsqueeze(1),
            self.speed_limit_embed(batch["speed_idx"]).unsqueeze(1),
            self.raster_encoder(batch["raster"]).unsqueeze(1),
        ]
        if self.config.include_ego_speed:
            context.append(self.ego_speed_proj(batch["ego_speed"][:, None]).unsqueeze(1))
        slots = self.slot_embed.unsqueeze(0).expand(b, -1, -1)
        tokens = torch.cat([obj, *context, slots], dim=1)

        n_fixed = tokens.shape[1] - obj.shape[1]
        mask = torch.cat([
            batch["obj_mask"],
            torch.ones(b, n_fixed, dtype=torch.bool, device=obj.device),
        ], dim=1)
        return tokens, mask

    # -- forward --------------------------------------------------------------

    def forward(self, batch: dict) -> dict:
        tokens, mask = self.tokenize(batch)
        _check_finite(tokens, "tokenizer")
        x = tokens
        for i, layer in enumerate(self.layers):
            x = layer(x, mask)
            _check_finite(x, f"transformer layer {i}")
        x = self.final_ln(x)

        n_slots = sum(self._slot_counts)
        slot_out = x[:, -n_slots:]
        target = batch["target"]

        out: dict = {}
        cursor = 0
        for (name, n_points), count in zip(self.modes, self._slot_counts):
            chunk = slot_out[:, cursor:cursor + count]
            cursor += count
            decoder = self.decoders[name]
            if isinstance(decoder, SingleTokenGRUDecoder):
                points, raw = decoder(chunk[:, 0], target)
            else:
                points, raw = decoder(chunk, target)
            out[f"{name}_points"] = points
            out[f"{name}_raw"] = raw          # deltas for linear, points for GRUs
        if self.config.predicts_speed:
            out["speed_logits"] = self.speed_head(slot_out[:, cursor])
        for key, value in out.items():
            _check_finite(value, key)
        return out

    def decode_points(self, slot_outputs: torch.Tensor, mode: str,
                      target: torch.Tensor) -> torch.Tensor:
        """Run one mode's decoder on given slot outputs (shape-checked)."""
        decoder = self.decoders[mode]
        n_points = dict(self.modes)[mode]
        if isinstance(decoder, SingleTokenGRUDecoder):
            if slot_outputs.dim() != 2:
                raise ValueError("single-token decoder expects (B, D)")
            return decoder(slot_outputs, target)[0]
        if slot_outputs.dim() != 3 or slot_outputs.shape[1] != n_points:
            raise ValueError(f"multi-token decoder expects (B, {n_points}, D)")
        return decoder(slot_outputs, target)[0]
