//! Three-round masked-sum secure aggregation with dropout recovery.
//!
//! The session is a state machine driven by the simulator:
//!
//! 1. **Setup.** A trusted coordinator draws a pairwise seed `s_ij` for every
//!    pair `i < j` and a self-mask seed `b_i` for every client, and deals
//!    Shamir shares of all seeds to all clients.
//! 2. **Masked input.** Client `i` sends
//!    `q(v_i) + sum_{j>i} PRG(s_ij) - sum_{j<i} PRG(s_ji) + PRG(b_i)`.
//!    Messages that never reach the server mark their senders as dropped.
//! 3. **Unmasking.** Each survivor reveals its shares of `b_i` for every
//!    survivor and of `s_dj` for every dropped `d`. The server reconstructs
//!    those seeds, strips the masks and decodes the sum.
//!
//! Revealing both `b_i` and a pairwise seed of the same client would expose
//! that client's input, so the server refuses such a transcript.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::SecAggError;
use crate::field::{FieldElement, FixedPointCodec};
use crate::sharing::{self, Share, SharingParams};

const PRG_DOMAIN: &[u8] = b"hybridfl/secagg/prg/v1";

/// Expands a seed into `dim` uniform field elements.
///
/// The keystream is ChaCha20 keyed by `SHA-256(domain || seed)`; each 64-bit
/// word is masked to 61 bits and the single value `p` is rejected.
pub fn expand_mask(seed: FieldElement, dim: usize) -> Vec<FieldElement> {
    let mut hasher = Sha256::new();
    hasher.update(PRG_DOMAIN);
    hasher.update(seed.value().to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(key);
    (0..dim).map(|_| FieldElement::random(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundState {
    Setup,
    MaskedInput,
    Unmasking,
    Done,
    Aborted,
}

impl RoundState {
    fn name(self) -> &'static str {
        match self {
            RoundState::Setup => "Setup",
            RoundState::MaskedInput => "MaskedInput",
            RoundState::Unmasking => "Unmasking",
            RoundState::Done => "Done",
            RoundState::Aborted => "Aborted",
        }
    }
}

/// A client's masked, quantized input vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedVector {
    pub sender: usize,
    pub payload: Vec<FieldElement>,
}

/// Shares one surviving client reveals during unmasking.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RevealMessage {
    pub from: usize,
    /// `(owner, share of b_owner)`
    pub self_mask_shares: Vec<(usize, Share)>,
    /// `(dropped client, partner, share of the pair seed)`
    pub pairwise_shares: Vec<(usize, usize, Share)>,
}

#[derive(Debug)]
struct ClientSecrets {
    self_seed: FieldElement,
    /// partner id -> seed shared with that partner
    pair_seeds: BTreeMap<usize, FieldElement>,
    submitted: AtomicBool,
}

#[derive(Debug, Default)]
struct ShareHoldings {
    /// owner id -> this client's share of b_owner
    self_mask: BTreeMap<usize, Share>,
    /// (i, j) with i < j -> this client's share of s_ij
    pairwise: BTreeMap<(usize, usize), Share>,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// One aggregation session over clients `1..=n`.
#[derive(Debug)]
pub struct SecAggSession {
    params: SharingParams,
    codec: FixedPointCodec,
    dim: usize,
    state: RoundState,
    secrets: Vec<ClientSecrets>,
    holdings: Vec<ShareHoldings>,
    survivors: Vec<usize>,
}

impl SecAggSession {
    /// Runs the setup round and leaves the session in `MaskedInput`.
    pub fn setup<R: RngCore + ?Sized>(
        n: usize,
        t: usize,
        dim: usize,
        codec: FixedPointCodec,
        rng: &mut R,
    ) -> Result<Self, SecAggError> {
        let params = SharingParams::new(t, n)
            .map_err(|_| SecAggError::Config(format!("threshold {t} and clients {n} need 1 <= t <= n")))?;
        if dim == 0 {
            return Err(SecAggError::Config("vector dimension must be at least 1".into()));
        }
        if n as u64 > codec.max_addends() {
            return Err(SecAggError::Config(format!(
                "{n} clients exceed the codec limit of {} addends",
                codec.max_addends()
            )));
        }

        let mut session = Self {
            params,
            codec,
            dim,
            state: RoundState::Setup,
            secrets: Vec::with_capacity(n),
            holdings: (0..n).map(|_| ShareHoldings::default()).collect(),
            survivors: Vec::new(),
        };

        for owner in 1..=n {
            let self_seed = FieldElement::random(rng);
            let shares = sharing::share(self_seed, params, rng);
            for (holder, s) in shares.into_iter().enumerate() {
                session.holdings[holder].self_mask.insert(owner, s);
            }
            session.secrets.push(ClientSecrets {
                self_seed,
                pair_seeds: BTreeMap::new(),
                submitted: AtomicBool::new(false),
            });
        }
        for i in 1..=n {
            for j in (i + 1)..=n {
                let seed = FieldElement::random(rng);
                session.secrets[i - 1].pair_seeds.insert(j, seed);
                session.secrets[j - 1].pair_seeds.insert(i, seed);
                let shares = sharing::share(seed, params, rng);
                for (holder, s) in shares.into_iter().enumerate() {
                    session.holdings[holder].pairwise.insert((i, j), s);
                }
            }
        }
        session.state = RoundState::MaskedInput;
        Ok(session)
    }

    pub fn state(&self) -> RoundState {
        self.state
    }

    pub fn params(&self) -> SharingParams {
        self.params
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_clients(&self) -> usize {
        self.secrets.len()
    }

    pub fn survivors(&self) -> &[usize] {
        &self.survivors
    }

    /// Number of distinct pairwise seeds dealt during setup.
    pub fn pairwise_seed_count(&self) -> usize {
        self.secrets.iter().map(|c| c.pair_seeds.len()).sum::<usize>() / 2
    }

    /// Per-coordinate error bound of the decoded sum for `survivors` inputs.
    pub fn tolerance(&self, survivors: usize) -> f64 {
        survivors as f64 * self.codec.step() / 2.0
    }

    fn expect_state(&self, expected: RoundState) -> Result<(), SecAggError> {
        if self.state != expected {
            return Err(SecAggError::WrongRound {
                expected: expected.name(),
                actual: self.state.name(),
            });
        }
        Ok(())
    }

    fn check_client(&self, id: usize) -> Result<(), SecAggError> {
        if id == 0 || id > self.secrets.len() {
            return Err(SecAggError::UnknownClient(id));
        }
        Ok(())
    }

    /// Client-side masking. Takes `&self`: each call touches only the
    /// sender's own submission flag.
    pub fn client_mask_input(&self, id: usize, input: &[f64]) -> Result<MaskedVector, SecAggError> {
        self.expect_state(RoundState::MaskedInput)?;
        self.check_client(id)?;
        if input.len() != self.dim {
            return Err(SecAggError::DimensionMismatch {
                expected: self.dim,
                got: input.len(),
            });
        }
        let me = &self.secrets[id - 1];
        if me.submitted.swap(true, Ordering::SeqCst) {
            return Err(SecAggError::DuplicateSubmission(id));
        }

        let mut payload: Vec<FieldElement> = input.iter().map(|&x| self.codec.quantize(x)).collect();
        for (&partner, &seed) in &me.pair_seeds {
            let mask = expand_mask(seed, self.dim);
            if partner > id {
                payload.iter_mut().zip(&mask).for_each(|(p, m)| *p += *m);
            } else {
                payload.iter_mut().zip(&mask).for_each(|(p, m)| *p -= *m);
            }
        }
        let self_mask = expand_mask(me.self_seed, self.dim);
        payload.iter_mut().zip(&self_mask).for_each(|(p, m)| *p += *m);

        Ok(MaskedVector { sender: id, payload })
    }

    /// Server closes the masked-input round with whatever messages arrived.
    /// Senders become the survivor set.
    pub fn close_input_round(&mut self, msgs: &[MaskedVector]) -> Result<&[usize], SecAggError> {
        self.expect_state(RoundState::MaskedInput)?;
        let mut senders = BTreeSet::new();
        for m in msgs {
            self.check_client(m.sender)?;
            if m.payload.len() != self.dim {
                return Err(SecAggError::DimensionMismatch {
                    expected: self.dim,
                    got: m.payload.len(),
                });
            }
            if !senders.insert(m.sender) {
                return Err(SecAggError::DuplicateSubmission(m.sender));
            }
        }
        if senders.len() < self.params.threshold() {
            self.state = RoundState::Aborted;
            return Err(SecAggError::Aborted {
                survivors: senders.len(),
                threshold: self.params.threshold(),
            });
        }
        self.survivors = senders.into_iter().collect();
        self.state = RoundState::Unmasking;
        Ok(&self.survivors)
    }

    /// Honest reveal by survivor `id` for the announced survivor set.
    pub fn reveal_shares(&self, id: usize) -> Result<RevealMessage, SecAggError> {
        self.expect_state(RoundState::Unmasking)?;
        self.check_client(id)?;
        if !self.survivors.contains(&id) {
            return Err(SecAggError::UnknownClient(id));
        }
        let held = &self.holdings[id - 1];
        let mut msg = RevealMessage {
            from: id,
            ..RevealMessage::default()
        };
        for &owner in &self.survivors {
            msg.self_mask_shares.push((owner, held.self_mask[&owner]));
        }
        for dropped in (1..=self.num_clients()).filter(|c| !self.survivors.contains(c)) {
            for &partner in &self.survivors {
                let share = held.pairwise[&pair_key(dropped, partner)];
                msg.pairwise_shares.push((dropped, partner, share));
            }
        }
        Ok(msg)
    }

    /// Reconstructs the revealed seeds, removes all masks and returns the
    /// decoded sum of the survivors' clamped inputs.
    pub fn server_unmask(
        &mut self,
        msgs: &[MaskedVector],
        reveals: &[RevealMessage],
    ) -> Result<Vec<f64>, SecAggError> {
        self.expect_state(RoundState::Unmasking)?;
        let senders: BTreeSet<usize> = msgs.iter().map(|m| m.sender).collect();
        if senders.len() != msgs.len() || senders.iter().ne(self.survivors.iter()) {
            return Err(SecAggError::Config(
                "unmasking messages must come exactly from the survivor set".into(),
            ));
        }
        if msgs.iter().any(|m| m.payload.len() != self.dim) {
            return Err(SecAggError::DimensionMismatch {
                expected: self.dim,
                got: msgs.iter().map(|m| m.payload.len()).find(|&l| l != self.dim).unwrap_or(0),
            });
        }

        let mut self_shares: BTreeMap<usize, Vec<Share>> = BTreeMap::new();
        let mut pair_shares: BTreeMap<(usize, usize), Vec<Share>> = BTreeMap::new();
        let mut exposed_dropouts = BTreeSet::new();
        let mut revealers = BTreeSet::new();
        for r in reveals {
            if !self.survivors.contains(&r.from) || !revealers.insert(r.from) {
                return Err(SecAggError::UnknownClient(r.from));
            }
            for &(owner, s) in &r.self_mask_shares {
                self_shares.entry(owner).or_default().push(s);
            }
            for &(dropped, partner, s) in &r.pairwise_shares {
                exposed_dropouts.insert(dropped);
                pair_shares.entry((dropped, partner)).or_default().push(s);
            }
        }
        if let Some(&leaked) = self_shares.keys().find(|c| exposed_dropouts.contains(c)) {
            self.state = RoundState::Aborted;
            return Err(SecAggError::MaskLeak(leaked));
        }

        let t = self.params.threshold();
        let mut sum = vec![FieldElement::ZERO; self.dim];
        for m in msgs {
            sum.iter_mut().zip(&m.payload).for_each(|(s, p)| *s += *p);
        }

        for &owner in &self.survivors {
            let shares = self_shares.get(&owner).map(Vec::as_slice).unwrap_or(&[]);
            if shares.len() < t {
                self.state = RoundState::Aborted;
                return Err(SecAggError::InsufficientShares(format!("self mask of client {owner}")));
            }
            let seed = sharing::reconstruct(shares, self.params)?;
            let mask = expand_mask(seed, self.dim);
            sum.iter_mut().zip(&mask).for_each(|(s, m)| *s -= *m);
        }

        for dropped in (1..=self.num_clients()).filter(|c| !self.survivors.contains(c)) {
            for &partner in &self.survivors {
                let shares = pair_shares
                    .get(&(dropped, partner))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                if shares.len() < t {
                    self.state = RoundState::Aborted;
                    return Err(SecAggError::InsufficientShares(format!(
                        "pair seed of clients {dropped} and {partner}"
                    )));
                }
                let seed = sharing::reconstruct(shares, self.params)?;
                let mask = expand_mask(seed, self.dim);
                // The partner added +PRG when dropped > partner, and -PRG otherwise.
                if dropped > partner {
                    sum.iter_mut().zip(&mask).for_each(|(s, m)| *s -= *m);
                } else {
                    sum.iter_mut().zip(&mask).for_each(|(s, m)| *s += *m);
                }
            }
        }

        let count = self.survivors.len() as u64;
        let decoded = sum
            .into_iter()
            .map(|s| self.codec.dequantize_sum(s, count))
            .collect::<Result<Vec<_>, _>>()?;
        self.state = RoundState::Done;
        Ok(decoded)
    }

    /// Drives the masked-input and unmasking rounds in-process. Messages from
    /// clients in `drop_after_masking` never reach the server.
    pub fn simulate_round(
        &mut self,
        inputs: &[Vec<f64>],
        drop_after_masking: &[usize],
    ) -> Result<Vec<f64>, SecAggError> {
        if inputs.len() != self.num_clients() {
            return Err(SecAggError::Config(format!(
                "{} inputs for {} clients",
                inputs.len(),
                self.num_clients()
            )));
        }
        let mut delivered = Vec::with_capacity(inputs.len());
        for (idx, v) in inputs.iter().enumerate() {
            let id = idx + 1;
            let msg = self.client_mask_input(id, v)?;
            if !drop_after_masking.contains(&id) {
                delivered.push(msg);
            }
        }
        let survivors = self.close_input_round(&delivered)?.to_vec();
        let reveals = survivors
            .iter()
            .map(|&id| self.reveal_shares(id))
            .collect::<Result<Vec<_>, _>>()?;
        self.server_unmask(&delivered, &reveals)
    }
}
