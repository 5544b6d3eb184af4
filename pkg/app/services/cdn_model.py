"""
Conditional diversity network

A convolutional encoder maps a padded symbol sequence to a diagonal Gaussian
in latent space; a latent draw with variance scaled by the diversity
parameter seeds an LSTM decoder through a learned bridge, and the decoder
emits the candidate SMILES one symbol at a time.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.models.cdn import (
    Checkpoint,
    DecoderMode,
    DiversityConfig,
    EpochRecord,
    LatentGaussian,
    LossBreakdown,
    ModelConfig,
    TrainingMetadata,
)
from app.models.sequence import END, PAD, SPECIAL_TOKENS, CorpusSplit, EncodedSequence, Vocabulary
from app.services import autodiff as ad
from app.services.autodiff import AdamState, Parameter, Tape, Tensor
from app.services.data_pipeline import build_vocab, encode as encode_smiles
from app.utils.exceptions import (
    DivergedLoss,
    EmptySplit,
    SequenceTooLong,
    ShapeMismatch,
    UnknownToken,
    VocabularyMismatch,
)

logger = logging.getLogger(__name__)

LOG_SIGMA_BOUND = 8.0
EMBEDDING_INIT_BOUND = 0.1
CONV_INIT_STD = 0.1
VALIDATION_BATCH = 256


def diverse_sample(
    g: LatentGaussian, diversity: float, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """z = mu + sigma * n with n ~ N(0, diversity) elementwise.

    With diversity = 1 this is the usual reparameterized draw for the same
    generator state. `size` draws that many independent vectors at once.
    """
    if diversity <= 0:
        raise ValueError(f"diversity must be positive, got {diversity}")
    shape = g.mu.shape if size is None else (size,) + g.mu.shape
    noise = rng.standard_normal(shape)
    return g.mu + g.sigma * (math.sqrt(diversity) * noise)


class CDNModel:
    """Encoder, bridge and decoder parameters plus the forward passes over them"""

    def __init__(
        self,
        config: ModelConfig,
        vocabulary: Vocabulary,
        parameters: Optional[Dict[str, np.ndarray]] = None,
    ):
        self.config = config
        self.vocabulary = vocabulary
        self.parameters: Dict[str, Parameter] = {}
        if parameters is None:
            self._initialize(np.random.default_rng(config.seed))
        else:
            self.load_parameters(parameters)

    # Parameters

    def _shapes(self) -> Dict[str, Tuple[int, ...]]:
        c = self.config
        vocab = len(self.vocabulary)
        shapes: Dict[str, Tuple[int, ...]] = {"embedding": (vocab, c.embed_dim)}
        for width in c.filter_widths:
            shapes[f"conv_w{width}_kernel"] = (width, c.embed_dim, c.filters_per_width)
            shapes[f"conv_w{width}_bias"] = (c.filters_per_width,)
        for head in ("mu", "log_sigma"):
            shapes[f"{head}_weight"] = (c.total_filters, c.latent_dim)
            shapes[f"{head}_bias"] = (c.latent_dim,)
        for state in ("h", "c"):
            shapes[f"bridge_{state}_weight"] = (c.latent_dim, c.lstm_units)
            shapes[f"bridge_{state}_bias"] = (c.lstm_units,)
        shapes["lstm_wx"] = (c.embed_dim, 4 * c.lstm_units)
        shapes["lstm_wh"] = (c.lstm_units, 4 * c.lstm_units)
        shapes["lstm_bias"] = (4 * c.lstm_units,)
        shapes["output_weight"] = (c.lstm_units, vocab)
        shapes["output_bias"] = (vocab,)
        return shapes

    def _initialize(self, rng: np.random.Generator) -> None:
        for name, shape in self._shapes().items():
            if name == "embedding":
                value = ad.uniform_init(rng, shape, EMBEDDING_INIT_BOUND)
            elif name.endswith("_kernel"):
                value = ad.truncated_normal_init(rng, shape, CONV_INIT_STD)
            elif name.endswith("bias"):
                value = np.zeros(shape, dtype=ad.DTYPE)
            else:
                value = ad.xavier_uniform_init(rng, shape)
            self.parameters[name] = Parameter(value, name)

    def load_parameters(self, values: Dict[str, np.ndarray]) -> None:
        shapes = self._shapes()
        missing = set(shapes) - set(values)
        if missing:
            raise ShapeMismatch(f"Missing parameter blocks: {sorted(missing)}")
        for name, shape in shapes.items():
            value = np.asarray(values[name])
            if value.shape != shape:
                raise ShapeMismatch(f"Parameter {name!r} has shape {value.shape}, expected {shape}")
            self.parameters[name] = Parameter(value.astype(ad.DTYPE, copy=True), name)

    def parameter_list(self) -> List[Parameter]:
        return list(self.parameters.values())

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters.items()}

    def cast(self, dtype) -> "CDNModel":
        """Convert every parameter in place (float64 for gradient checking)"""
        for p in self.parameters.values():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        return self

    def zero_grad(self) -> None:
        ad.zero_grad(self.parameter_list())

    def __getitem__(self, name: str) -> Parameter:
        return self.parameters[name]

    # Input checks

    def _prepare(self, seq: EncodedSequence) -> np.ndarray:
        length = self.config.max_len + 2
        if seq.true_length > self.config.max_len:
            raise ShapeMismatch(f"Sequence of {seq.true_length} tokens exceeds max_len {self.config.max_len}")
        indices = np.full(length, PAD, dtype=np.int64)
        used = min(len(seq.indices), length)
        indices[:used] = seq.indices[:used]
        vocab = len(self.vocabulary)
        bad = np.nonzero((indices < 0) | (indices >= vocab))[0]
        if bad.size:
            raise VocabularyMismatch(
                f"Token index {indices[bad[0]]} at position {bad[0]} is outside the model vocabulary of {vocab}",
                position=int(bad[0]),
            )
        return indices

    def _batch_indices(self, batch: Sequence[EncodedSequence]) -> np.ndarray:
        return np.stack([self._prepare(seq) for seq in batch])

    # Forward passes

    def _encode_tensors(self, indices: np.ndarray) -> Tuple[Tensor, Tensor]:
        p = self.parameters
        widths = self.config.filter_widths
        embedded = ad.embedding_lookup(p["embedding"], indices)
        features = ad.relu(
            ad.conv1d_bank(
                embedded,
                [p[f"conv_w{w}_kernel"] for w in widths],
                [p[f"conv_w{w}_bias"] for w in widths],
            )
        )
        mu = ad.dense(features, p["mu_weight"], p["mu_bias"])
        log_sigma = ad.clamp(
            ad.dense(features, p["log_sigma_weight"], p["log_sigma_bias"]), -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND
        )
        return mu, log_sigma

    def _bridge(self, z: Tensor) -> Tuple[Tensor, Tensor]:
        p = self.parameters
        h = ad.tanh(ad.dense(z, p["bridge_h_weight"], p["bridge_h_bias"]))
        c = ad.tanh(ad.dense(z, p["bridge_c_weight"], p["bridge_c_bias"]))
        return h, c

    def _lstm_params(self) -> Tuple[Parameter, Parameter, Parameter]:
        p = self.parameters
        return p["lstm_wx"], p["lstm_wh"], p["lstm_bias"]

    def _teacher_forced(self, z: Tensor, indices: np.ndarray, lengths: Sequence[int]) -> Tuple[Tensor, Tensor, int]:
        """Logits [batch, steps, vocab], summed masked cross-entropy, token count"""
        p = self.parameters
        steps = int(max(lengths)) + 1
        inputs = indices[:, :steps]
        targets = indices[:, 1:steps + 1]
        mask = (targets != PAD).astype(p["output_weight"].data.dtype)

        h, c = self._bridge(z)
        embedded = ad.embedding_lookup(p["embedding"], inputs)
        states = []
        for t in range(steps):
            h, c = ad.lstm_cell_step(ad.select(embedded, t, axis=1), h, c, self._lstm_params())
            states.append(h)
        logits = ad.dense(ad.stack(states, axis=1), p["output_weight"], p["output_bias"])
        return logits, ad.softmax_cross_entropy(logits, targets, mask), int(mask.sum())

    def _kl_divisor(self, tokens: int, molecules: int) -> int:
        return molecules if self.config.kl_normalization == "molecule" else tokens

    def forward_loss(
        self,
        batch: Sequence[EncodedSequence],
        noise: np.ndarray,
        kl_weight: float,
        diversity: float = 1.0,
    ) -> Tuple[Tensor, LossBreakdown]:
        """Loss of a batch for fixed standard-normal noise; differentiable on the active tape"""
        indices = self._batch_indices(batch)
        mu, log_sigma = self._encode_tensors(indices)
        noise = Tensor(np.asarray(noise * math.sqrt(diversity), dtype=mu.data.dtype))
        z = ad.add(mu, ad.mul(ad.exp(log_sigma), noise))

        _, rec_sum, tokens = self._teacher_forced(z, indices, [seq.true_length for seq in batch])
        kl_sum = ad.kl_gaussian_to_standard(mu, log_sigma)
        reconstruction = ad.scale(rec_sum, 1.0 / tokens)
        kl = ad.scale(kl_sum, 1.0 / self._kl_divisor(tokens, len(batch)))
        total = ad.add(reconstruction, ad.scale(kl, kl_weight))
        breakdown = LossBreakdown(
            reconstruction=float(reconstruction.data),
            kl=float(kl.data),
            kl_weight=kl_weight,
            total=float(total.data),
            tokens=tokens,
        )
        return total, breakdown

    # Public operations

    def encode(self, seq: EncodedSequence) -> LatentGaussian:
        g = self.encode_batch([seq])
        return g.row(0)

    def encode_batch(self, seqs: Sequence[EncodedSequence]) -> LatentGaussian:
        mu, log_sigma = self._encode_tensors(self._batch_indices(seqs))
        return LatentGaussian(mu.data.copy(), log_sigma.data.copy())

    def encode_smiles(self, s: str) -> EncodedSequence:
        """Encode a string with this model's vocabulary, reporting unusable input"""
        try:
            return encode_smiles(s, self.vocabulary, self.config.max_len)
        except UnknownToken as e:
            raise VocabularyMismatch(
                f"Prototype {s!r} has token {e.token!r} at position {e.position} outside the model vocabulary",
                position=e.position,
            )
        except SequenceTooLong as e:
            raise VocabularyMismatch(f"Prototype {s!r} cannot be encoded: {e}")

    def decode_teacher_forced(
        self,
        z: np.ndarray,
        target: EncodedSequence,
        latent: Optional[LatentGaussian] = None,
        kl_weight: float = 1.0,
    ) -> Tuple[np.ndarray, LossBreakdown]:
        """Per-step logits [true_length + 1, vocab] and the loss of target given z"""
        z = np.asarray(z)
        if z.ndim != 1 or z.shape[0] != self.config.latent_dim:
            raise ShapeMismatch(f"z must have shape ({self.config.latent_dim},), got {z.shape}")
        dtype = self.parameters["output_weight"].data.dtype
        indices = self._prepare(target)[None]
        logits, rec_sum, tokens = self._teacher_forced(
            Tensor(z[None].astype(dtype)), indices, [target.true_length]
        )
        if latent is None:
            latent = self.encode(target)
        kl_sum = 0.5 * float(np.sum(latent.mu ** 2 + latent.sigma ** 2 - 2.0 * latent.log_sigma - 1.0))
        reconstruction = float(rec_sum.data) / tokens
        kl = kl_sum / self._kl_divisor(tokens, 1)
        breakdown = LossBreakdown(
            reconstruction=reconstruction,
            kl=kl,
            kl_weight=kl_weight,
            total=reconstruction + kl_weight * kl,
            tokens=tokens,
        )
        return logits.data[0], breakdown

    def _strings(self, rows: List[List[int]]) -> List[str]:
        first_symbol = len(SPECIAL_TOKENS)
        return ["".join(self.vocabulary.token(i) for i in row if i >= first_symbol) for row in rows]

    def generate_batch(
        self,
        z: np.ndarray,
        mode: DecoderMode = "argmax",
        rng: Optional[np.random.Generator] = None,
        max_len: Optional[int] = None,
    ) -> List[str]:
        """Decode each row of z [n, latent_dim] from START until END or max_len + 1 steps"""
        z = np.atleast_2d(np.asarray(z))
        if z.shape[-1] != self.config.latent_dim:
            raise ShapeMismatch(f"z must have {self.config.latent_dim} columns, got {z.shape}")
        if mode not in ("argmax", "sampling"):
            raise ValueError(f"Unknown decoder mode {mode!r}")
        if mode == "sampling" and rng is None:
            raise ValueError("sampling mode needs a random generator")

        p = self.parameters
        dtype = p["output_weight"].data.dtype
        steps = (self.config.max_len if max_len is None else max_len) + 1
        n = z.shape[0]

        h, c = self._bridge(Tensor(z.astype(dtype)))
        tokens = np.full(n, 1, dtype=np.int64)  # START
        finished = np.zeros(n, dtype=bool)
        rows: List[List[int]] = [[] for _ in range(n)]
        for _ in range(steps):
            x = ad.embedding_lookup(p["embedding"], tokens)
            h, c = ad.lstm_cell_step(x, h, c, self._lstm_params())
            logits = ad.dense(h, p["output_weight"], p["output_bias"]).data
            if mode == "argmax":
                tokens = logits.argmax(axis=-1)
            else:
                cumulative = np.cumsum(ad.softmax(logits.astype(np.float64)), axis=-1)
                draws = rng.random(n)
                tokens = np.minimum((cumulative < draws[:, None]).sum(axis=-1), logits.shape[-1] - 1)
            for i in np.nonzero(~finished)[0]:
                if tokens[i] == END:
                    finished[i] = True
                else:
                    rows[i].append(int(tokens[i]))
            if finished.all():
                break
        return self._strings(rows)

    def generate(
        self,
        z: np.ndarray,
        mode: DecoderMode = "argmax",
        rng: Optional[np.random.Generator] = None,
        max_len: Optional[int] = None,
    ) -> str:
        return self.generate_batch(np.asarray(z)[None], mode, rng, max_len)[0]

    def generate_from_prototype(
        self, s: str, cfg: DiversityConfig, rng: Optional[np.random.Generator] = None
    ) -> List[str]:
        """k candidates around one prototype; duplicates are kept"""
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        g = self.encode(self.encode_smiles(s))
        z = diverse_sample(g, cfg.diversity, rng, size=cfg.k)
        return self.generate_batch(z, cfg.decoder_mode, rng)

    def generate_many(
        self, prototypes: Sequence[str], cfg: DiversityConfig, workers: Optional[int] = None
    ) -> List[List[str]]:
        """Candidates for several prototypes, one seeded stream per prototype.

        The stream of prototype i is child i of SeedSequence(cfg.seed), so the
        output does not depend on the worker count.
        """
        children = np.random.SeedSequence(cfg.seed).spawn(len(prototypes))
        jobs = list(zip(prototypes, children))
        workers = settings.WORKERS if workers is None else workers

        def run(job):
            prototype, child = job
            return self.generate_from_prototype(prototype, cfg, np.random.default_rng(child))

        if workers <= 1:
            return [run(job) for job in jobs]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))

    def generate_unconditional(self, rng: np.random.Generator, mode: DecoderMode = "argmax") -> str:
        """Decode a draw from the standard Gaussian prior"""
        return self.sample_prior(1, rng, mode)[0]

    def sample_prior(self, n: int, rng: np.random.Generator, mode: DecoderMode = "argmax") -> List[str]:
        """n strings decoded from independent N(0, I) latent draws, no prototype involved"""
        if n <= 0:
            return []
        z = rng.standard_normal((n, self.config.latent_dim))
        return self.generate_batch(z, mode, rng)

    def validation_loss(self, seqs: Sequence[EncodedSequence], batch_size: int = VALIDATION_BATCH) -> float:
        """Reconstruction cross-entropy per token with z = mu"""
        total = 0.0
        tokens = 0
        for start in range(0, len(seqs), batch_size):
            batch = seqs[start:start + batch_size]
            indices = self._batch_indices(batch)
            mu, _ = self._encode_tensors(indices)
            _, rec_sum, n = self._teacher_forced(mu, indices, [seq.true_length for seq in batch])
            total += float(rec_sum.data)
            tokens += n
        return total / tokens if tokens else float("nan")

    # Checkpoints

    def to_checkpoint(
        self, metadata: Optional[TrainingMetadata] = None, history: Optional[List[EpochRecord]] = None
    ) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            vocabulary=self.vocabulary,
            parameters=self.snapshot(),
            metadata=metadata or TrainingMetadata(),
            history=list(history or []),
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "CDNModel":
        return cls(checkpoint.config, checkpoint.vocabulary, checkpoint.parameters)


class CDNTrainer:
    """Minibatch Adam training with teacher forcing and validation early stopping"""

    def __init__(self, model: CDNModel):
        self.model = model
        self.config = model.config
        self.history: List[EpochRecord] = []
        self.step_losses: List[float] = []
        self.metadata = TrainingMetadata()

    def kl_weight(self, step: int, ramp_steps: int) -> float:
        start = self.config.kl_start_weight
        if ramp_steps <= 0:
            return 1.0
        return min(1.0, start + (1.0 - start) * step / ramp_steps)

    def fit(self, split: CorpusSplit) -> Checkpoint:
        cfg = self.config
        if not split.train or not split.validation:
            raise EmptySplit(f"Training needs non-empty train and validation sets, got {split.sizes()}")

        rng = np.random.default_rng(cfg.seed)
        n = len(split.train)
        steps_per_epoch = math.ceil(n / cfg.batch_size)
        max_steps = cfg.max_steps if cfg.max_steps is not None else cfg.max_epochs * steps_per_epoch
        ramp_steps = cfg.kl_ramp_steps if cfg.kl_ramp_steps is not None else max(1, int(0.1 * max_steps))
        params = self.model.parameter_list()
        state = AdamState()

        logger.info(
            f"🚀 Training on {n} molecules: {steps_per_epoch} steps/epoch, "
            f"up to {cfg.max_epochs} epochs / {max_steps} steps"
        )
        best_params = self.model.snapshot()
        stalled = 0
        step = 0
        for epoch in range(cfg.max_epochs):
            learning_rate = cfg.initial_learning_rate * cfg.lr_decay_rate ** epoch
            order = rng.permutation(n)
            sums = np.zeros(3)
            batches = 0
            weight = self.kl_weight(step, ramp_steps)
            for b in range(steps_per_epoch):
                if step >= max_steps:
                    break
                batch = [split.train[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
                weight = self.kl_weight(step, ramp_steps)
                noise = rng.standard_normal((len(batch), cfg.latent_dim))

                self.model.zero_grad()
                with Tape() as tape:
                    loss, breakdown = self.model.forward_loss(batch, noise, weight)
                if not math.isfinite(breakdown.total):
                    logger.error(f"❌ Loss diverged at epoch {epoch}, step {step}: {breakdown}")
                    raise DivergedLoss(
                        f"Non-finite loss at epoch {epoch}, step {step} "
                        f"(reconstruction={breakdown.reconstruction}, kl={breakdown.kl}, lr={learning_rate})"
                    )
                tape.backward(loss)
                ad.adam_step(params, state, learning_rate)

                self.step_losses.append(breakdown.total)
                sums += (breakdown.total, breakdown.reconstruction, breakdown.kl)
                batches += 1
                step += 1

            validation = self.model.validation_loss(split.validation)
            means = sums / max(batches, 1)
            record = EpochRecord(
                epoch=epoch,
                steps=step,
                learning_rate=learning_rate,
                kl_weight=weight,
                train_total=float(means[0]),
                train_reconstruction=float(means[1]),
                train_kl=float(means[2]),
                validation_reconstruction=validation,
            )
            self.history.append(record)
            logger.info(
                f"Epoch {epoch}: loss {record.train_total:.4f} "
                f"(rec {record.train_reconstruction:.4f}, kl {record.train_kl:.4f}), val rec {validation:.4f}"
            )

            self.metadata.steps = step
            if validation < self.metadata.best_validation_loss:
                self.metadata.best_validation_loss = validation
                self.metadata.epoch = epoch
                best_params = self.model.snapshot()
                stalled = 0
            else:
                stalled += 1
                if stalled >= cfg.early_stop_patience:
                    self.metadata.stopped_early = True
                    logger.info(f"🛑 Early stop after epoch {epoch}: no improvement for {stalled} epochs")
                    break
            if step >= max_steps:
                break

        self.model.load_parameters(best_params)
        logger.info(
            f"✅ Training finished at step {step}; best validation loss "
            f"{self.metadata.best_validation_loss:.4f} (epoch {self.metadata.epoch})"
        )
        return self.model.to_checkpoint(self.metadata, self.history)


def train(split: CorpusSplit, cfg: ModelConfig) -> Checkpoint:
    """Train a fresh model on split and return the best-validation checkpoint"""
    vocabulary = split.vocabulary
    if vocabulary is None:
        vocabulary = build_vocab(seq.smiles for seq in split.train + split.validation + split.test)
    model = CDNModel(cfg, vocabulary)
    return CDNTrainer(model).fit(split)


def history_rows(history: Sequence[EpochRecord]) -> List[dict]:
    return [asdict(record) for record in history]
