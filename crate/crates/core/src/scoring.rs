//! Feature extraction and the averaged linear model.
//!
//! Features are drawn from a fixed template table over parser configurations.
//! Each template concatenates atomic values (POS tags, lexical values,
//! cluster bitstrings, distances, valencies, label sets) read from a fixed
//! set of slots around the stack top and buffer front. A template yields a
//! feature only when every atom has a value.
//!
//! Templates fall into three families that can be toggled independently:
//!
//! * POS: delexicalized templates over tags and structure (ids 0..=99).
//! * Lexical: templates over per-token lexical values (ids 100..=199).
//! * Cluster: generated from the other two families by substituting cluster
//!   bitstrings at the stack-top and buffer-front slots (ids 200+). Each
//!   substitution is made against two keys: the surface form (for clusters
//!   trained on mixed-language text) and the lexical value (for clusters
//!   trained on target-language text).
//!
//! A feature is identified by its template id and a 64-bit FNV-1a hash of
//! its value string; the intended action is folded into the same hash, so
//! one extraction pass scores every candidate action.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::alphabet::Alphabet;
use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::transition::{Action, ActionKind, Configuration};

/// Bumped when the template table changes shape; stored in saved models.
pub const TABLE_VERSION: u32 = 1;

/// Cluster prefix lengths substituted into POS-family templates.
pub const CLUSTER_PREFIX_LEVELS: [u8; 2] = [4, 6];

/// Distances are capped here before becoming feature values.
pub const DISTANCE_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    S0,
    B0,
    B1,
    B2,
    S0Head,
    S0Head2,
    S0Left,
    S0Left2,
    S0Right,
    S0Right2,
    B0Left,
    B0Left2,
}

const SLOT_COUNT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterKind {
    /// Clusters keyed by surface form.
    Cross,
    /// Clusters keyed by lexical value.
    Mono,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    Pos(Slot),
    /// The token's lexical value.
    Word(Slot),
    /// Label of the arc attaching the token at the slot.
    DepLabel(Slot),
    /// Cluster bitstring prefix of the slot's key word.
    ClusterPos(Slot, ClusterKind, u8),
    /// Full cluster bitstring of the slot's key word.
    ClusterWord(Slot, ClusterKind),
    /// Capped distance between stack top and buffer front.
    Distance,
    LeftValency(Slot),
    RightValency(Slot),
    LeftLabelSet(Slot),
    RightLabelSet(Slot),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Pos,
    Cluster,
    Lexical,
}

/// Family of a template id, by range.
pub fn family_of(template: u16) -> Family {
    match template {
        0..=99 => Family::Pos,
        100..=199 => Family::Lexical,
        _ => Family::Cluster,
    }
}

/// Set of enabled template families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilySet(u8);

impl FamilySet {
    const POS_BIT: u8 = 1;
    const CLUSTER_BIT: u8 = 2;
    const LEXICAL_BIT: u8 = 4;

    /// POS templates only.
    pub fn delexicalized() -> Self {
        FamilySet(Self::POS_BIT)
    }

    /// POS plus cluster templates.
    pub fn with_clusters() -> Self {
        FamilySet(Self::POS_BIT | Self::CLUSTER_BIT)
    }

    /// POS plus word templates, no clusters.
    pub fn pos_and_lexical() -> Self {
        FamilySet(Self::POS_BIT | Self::LEXICAL_BIT)
    }

    /// Every family.
    pub fn full() -> Self {
        FamilySet(Self::POS_BIT | Self::CLUSTER_BIT | Self::LEXICAL_BIT)
    }

    pub fn contains(self, family: Family) -> bool {
        let bit = match family {
            Family::Pos => Self::POS_BIT,
            Family::Cluster => Self::CLUSTER_BIT,
            Family::Lexical => Self::LEXICAL_BIT,
        };
        self.0 & bit != 0
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits == 0 || bits > 7 {
            return Err(Error::data(format!("invalid feature family bits {:#x}", bits)));
        }
        Ok(FamilySet(bits))
    }

    pub fn describe(self) -> String {
        let mut parts = Vec::new();
        if self.contains(Family::Pos) {
            parts.push("pos");
        }
        if self.contains(Family::Cluster) {
            parts.push("clusters");
        }
        if self.contains(Family::Lexical) {
            parts.push("lexical");
        }
        parts.join("+")
    }
}

#[derive(Debug, Clone)]
pub struct Template {
    pub id: u16,
    pub atoms: Vec<Atom>,
}

fn pos_templates() -> Vec<(u16, Vec<Atom>)> {
    use Atom::*;
    use Slot::*;
    vec![
        (0, vec![Pos(S0)]),
        (1, vec![Pos(B0)]),
        (2, vec![Pos(B1)]),
        (3, vec![Pos(B2)]),
        (4, vec![Pos(S0), Pos(B0)]),
        (5, vec![Pos(B0), Pos(B1)]),
        (6, vec![Pos(B0), Pos(B1), Pos(B2)]),
        (7, vec![Pos(S0), Pos(B0), Pos(B1)]),
        (8, vec![Pos(S0Head), Pos(S0), Pos(B0)]),
        (9, vec![Pos(S0), Pos(S0Left), Pos(B0)]),
        (10, vec![Pos(S0), Pos(S0Right), Pos(B0)]),
        (11, vec![Pos(S0), Pos(B0), Pos(B0Left)]),
        (12, vec![Distance, Pos(S0)]),
        (13, vec![Distance, Pos(B0)]),
        (14, vec![Distance, Pos(S0), Pos(B0)]),
        (15, vec![RightValency(S0), Pos(S0)]),
        (16, vec![LeftValency(S0), Pos(S0)]),
        (17, vec![LeftValency(B0), Pos(B0)]),
        (18, vec![Pos(S0Head)]),
        (19, vec![DepLabel(S0)]),
        (20, vec![Pos(S0Left)]),
        (21, vec![DepLabel(S0Left)]),
        (22, vec![Pos(S0Right)]),
        (23, vec![DepLabel(S0Right)]),
        (24, vec![Pos(B0Left)]),
        (25, vec![DepLabel(B0Left)]),
        (26, vec![Pos(S0Head2)]),
        (27, vec![DepLabel(S0Head)]),
        (28, vec![Pos(S0Left2)]),
        (29, vec![DepLabel(S0Left2)]),
        (30, vec![Pos(S0Right2)]),
        (31, vec![DepLabel(S0Right2)]),
        (32, vec![Pos(B0Left2)]),
        (33, vec![DepLabel(B0Left2)]),
        (34, vec![Pos(S0), Pos(S0Left), Pos(S0Left2)]),
        (35, vec![Pos(S0), Pos(S0Right), Pos(S0Right2)]),
        (36, vec![Pos(S0), Pos(S0Head), Pos(S0Head2)]),
        (37, vec![Pos(B0), Pos(B0Left), Pos(B0Left2)]),
        (38, vec![RightLabelSet(S0), Pos(S0)]),
        (39, vec![LeftLabelSet(S0), Pos(S0)]),
        (40, vec![LeftLabelSet(B0), Pos(B0)]),
    ]
}

fn lexical_templates() -> Vec<(u16, Vec<Atom>)> {
    use Atom::*;
    use Slot::*;
    vec![
        (100, vec![Word(S0), Pos(S0)]),
        (101, vec![Word(S0)]),
        (102, vec![Word(B0), Pos(B0)]),
        (103, vec![Word(B0)]),
        (104, vec![Word(B1), Pos(B1)]),
        (105, vec![Word(B1)]),
        (106, vec![Word(B2), Pos(B2)]),
        (107, vec![Word(B2)]),
        (108, vec![Word(S0), Pos(S0), Word(B0), Pos(B0)]),
        (109, vec![Word(S0), Pos(S0), Word(B0)]),
        (110, vec![Word(S0), Word(B0), Pos(B0)]),
        (111, vec![Word(S0), Pos(S0), Pos(B0)]),
        (112, vec![Pos(S0), Word(B0), Pos(B0)]),
        (113, vec![Word(S0), Word(B0)]),
        (114, vec![Distance, Word(S0)]),
        (115, vec![Distance, Word(B0)]),
        (116, vec![Distance, Word(S0), Word(B0)]),
        (117, vec![RightValency(S0), Word(S0)]),
        (118, vec![LeftValency(S0), Word(S0)]),
        (119, vec![LeftValency(B0), Word(B0)]),
        (120, vec![Word(S0Head)]),
        (121, vec![Word(S0Left)]),
        (122, vec![Word(S0Right)]),
        (123, vec![Word(B0Left)]),
        (124, vec![Word(S0Head2)]),
        (125, vec![Word(S0Left2)]),
        (126, vec![Word(S0Right2)]),
        (127, vec![Word(B0Left2)]),
        (128, vec![RightLabelSet(S0), Word(S0)]),
        (129, vec![LeftLabelSet(S0), Word(S0)]),
        (130, vec![LeftLabelSet(B0), Word(B0)]),
    ]
}

/// Atom indices eligible for cluster substitution: POS or lexical values at
/// the stack top and buffer front.
fn substitutable(atoms: &[Atom], want_pos: bool) -> Vec<usize> {
    atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| match a {
            Atom::Pos(Slot::S0 | Slot::B0) => want_pos,
            Atom::Word(Slot::S0 | Slot::B0) => !want_pos,
            _ => false,
        })
        .map(|(i, _)| i)
        .collect()
}

fn build_table() -> Vec<Template> {
    let pos = pos_templates();
    let lexical = lexical_templates();
    let mut table: Vec<Template> = Vec::with_capacity(278);
    for (id, atoms) in &pos {
        table.push(Template { id: *id, atoms: atoms.clone() });
    }
    for (id, atoms) in &lexical {
        table.push(Template { id: *id, atoms: atoms.clone() });
    }
    let mut next: u16 = 200;
    for kind in [ClusterKind::Cross, ClusterKind::Mono] {
        for (_, atoms) in &pos {
            let spots = substitutable(atoms, true);
            if spots.is_empty() {
                continue;
            }
            for mask in 1u32..(1 << spots.len()) {
                for level in CLUSTER_PREFIX_LEVELS {
                    let mut sub = atoms.clone();
                    for (bit, &i) in spots.iter().enumerate() {
                        if mask & (1 << bit) != 0 {
                            let Atom::Pos(slot) = sub[i] else { unreachable!() };
                            sub[i] = Atom::ClusterPos(slot, kind, level);
                        }
                    }
                    table.push(Template { id: next, atoms: sub });
                    next += 1;
                }
            }
        }
        for (_, atoms) in &lexical {
            let spots = substitutable(atoms, false);
            if spots.is_empty() {
                continue;
            }
            for mask in 1u32..(1 << spots.len()) {
                let mut sub = atoms.clone();
                for (bit, &i) in spots.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        let Atom::Word(slot) = sub[i] else { unreachable!() };
                        sub[i] = Atom::ClusterWord(slot, kind);
                    }
                }
                table.push(Template { id: next, atoms: sub });
                next += 1;
            }
        }
    }
    table
}

/// The full template table, built once.
pub fn template_table() -> &'static [Template] {
    static TABLE: OnceLock<Vec<Template>> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    fnv1a_64_continue(FNV_OFFSET, bytes)
}

pub fn fnv1a_64_continue(hash: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(hash, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// A feature instance: the template plus the hash of its value string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureId {
    pub template: u16,
    pub payload: u64,
}

/// Folds an action into a feature, keeping the template id. The label is
/// hashed by name so the result does not depend on interning order.
pub fn conjoin(id: FeatureId, kind: ActionKind, label: Option<&str>) -> FeatureId {
    let mut payload = fnv1a_64_continue(id.payload, &[kind.ordinal()]);
    if let Some(l) = label {
        payload = fnv1a_64_continue(payload, l.as_bytes());
    }
    FeatureId { template: id.template, payload }
}

/// Cluster lookups available during extraction; either side may be absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClusterContext<'a> {
    pub cross: Option<&'a Clustering>,
    pub mono: Option<&'a Clustering>,
}

impl<'a> ClusterContext<'a> {
    pub fn none() -> ClusterContext<'static> {
        ClusterContext { cross: None, mono: None }
    }

    fn get(&self, kind: ClusterKind) -> Option<&'a Clustering> {
        match kind {
            ClusterKind::Cross => self.cross,
            ClusterKind::Mono => self.mono,
        }
    }
}

fn slot_index(slot: Slot) -> usize {
    match slot {
        Slot::S0 => 0,
        Slot::B0 => 1,
        Slot::B1 => 2,
        Slot::B2 => 3,
        Slot::S0Head => 4,
        Slot::S0Head2 => 5,
        Slot::S0Left => 6,
        Slot::S0Left2 => 7,
        Slot::S0Right => 8,
        Slot::S0Right2 => 9,
        Slot::B0Left => 10,
        Slot::B0Left2 => 11,
    }
}

struct SlotView {
    pos: [Option<usize>; SLOT_COUNT],
    distance: Option<usize>,
}

impl SlotView {
    fn new(config: &Configuration) -> Self {
        let s0 = config.stack_top();
        let b0 = config.buffer_at(0);
        let s0h = config.head_of_pos(s0).map(|(h, _)| h);
        let mut pos = [None; SLOT_COUNT];
        pos[0] = Some(s0);
        pos[1] = b0;
        pos[2] = config.buffer_at(1);
        pos[3] = config.buffer_at(2);
        pos[4] = s0h;
        pos[5] = s0h.and_then(|h| config.head_of_pos(h)).map(|(h, _)| h);
        pos[6] = config.leftmost_child(s0);
        pos[7] = config.second_leftmost_child(s0);
        pos[8] = config.rightmost_child(s0);
        pos[9] = config.second_rightmost_child(s0);
        pos[10] = b0.and_then(|b| config.leftmost_child(b));
        pos[11] = b0.and_then(|b| config.second_leftmost_child(b));
        SlotView {
            pos,
            distance: b0.map(|b| (b - s0).min(DISTANCE_CAP)),
        }
    }

    fn resolve(&self, slot: Slot) -> Option<usize> {
        self.pos[slot_index(slot)]
    }
}

/// Appends the atom's value to `buf`; false means the atom has no value and
/// the whole template is suppressed.
fn append_atom(
    buf: &mut String,
    atom: Atom,
    view: &SlotView,
    config: &Configuration,
    labels: &Alphabet,
    clusters: &ClusterContext,
) -> bool {
    match atom {
        Atom::Pos(slot) => {
            let Some(p) = view.resolve(slot) else { return false };
            buf.push_str(if p == 0 { "ROOT" } else { &config.sentence.token(p).upos });
            true
        }
        Atom::Word(slot) => {
            let Some(p) = view.resolve(slot) else { return false };
            if p == 0 {
                return false;
            }
            match &config.sentence.token(p).lexform {
                Some(w) => {
                    buf.push_str(w);
                    true
                }
                None => false,
            }
        }
        Atom::DepLabel(slot) => {
            let Some(p) = view.resolve(slot) else { return false };
            match config.head_of_pos(p) {
                Some((_, l)) => {
                    buf.push_str(labels.resolve(l));
                    true
                }
                None => false,
            }
        }
        Atom::ClusterPos(..) | Atom::ClusterWord(..) => {
            let (slot, kind, level) = match atom {
                Atom::ClusterPos(s, k, l) => (s, k, Some(l)),
                Atom::ClusterWord(s, k) => (s, k, None),
                _ => unreachable!(),
            };
            let Some(p) = view.resolve(slot) else { return false };
            if p == 0 {
                return false;
            }
            let Some(clustering) = clusters.get(kind) else { return false };
            let token = config.sentence.token(p);
            let key = match kind {
                ClusterKind::Cross => Some(token.form.as_str()),
                ClusterKind::Mono => token.lexform.as_deref(),
            };
            let Some(key) = key else { return false };
            let value = match level {
                Some(l) => clustering.prefix(key, l as usize),
                None => clustering.bitstring(key),
            };
            match value {
                Some(v) => {
                    buf.push_str(v);
                    true
                }
                None => false,
            }
        }
        Atom::Distance => match view.distance {
            Some(d) => {
                write!(buf, "{}", d).unwrap();
                true
            }
            None => false,
        },
        Atom::LeftValency(slot) => {
            let Some(p) = view.resolve(slot) else { return false };
            write!(buf, "{}", config.left_valency(p)).unwrap();
            true
        }
        Atom::RightValency(slot) => {
            let Some(p) = view.resolve(slot) else { return false };
            write!(buf, "{}", config.right_valency(p)).unwrap();
            true
        }
        Atom::LeftLabelSet(slot) => {
            let Some(p) = view.resolve(slot) else { return false };
            write!(buf, "{:x}", config.left_label_mask(p)).unwrap();
            true
        }
        Atom::RightLabelSet(slot) => {
            let Some(p) = view.resolve(slot) else { return false };
            write!(buf, "{:x}", config.right_label_mask(p)).unwrap();
            true
        }
    }
}

fn extract_into(
    config: &Configuration,
    labels: &Alphabet,
    families: FamilySet,
    clusters: &ClusterContext,
    mut sink: impl FnMut(u16, &str),
) {
    let view = SlotView::new(config);
    let mut buf = String::with_capacity(64);
    for template in template_table() {
        if !families.contains(family_of(template.id)) {
            continue;
        }
        buf.clear();
        let mut complete = true;
        for (i, &atom) in template.atoms.iter().enumerate() {
            if i > 0 {
                buf.push('|');
            }
            if !append_atom(&mut buf, atom, &view, config, labels, clusters) {
                complete = false;
                break;
            }
        }
        if complete {
            sink(template.id, &buf);
        }
    }
}

/// Extracts the configuration's features for the enabled families, in
/// template order.
pub fn extract(
    config: &Configuration,
    labels: &Alphabet,
    families: FamilySet,
    clusters: &ClusterContext,
) -> Vec<FeatureId> {
    let mut out = Vec::with_capacity(64);
    extract_into(config, labels, families, clusters, |id, value| {
        out.push(FeatureId { template: id, payload: fnv1a_64(value.as_bytes()) });
    });
    out
}

/// Like [`extract`], but yields readable `(template id, value string)` pairs.
pub fn extract_described(
    config: &Configuration,
    labels: &Alphabet,
    families: FamilySet,
    clusters: &ClusterContext,
) -> Vec<(u16, String)> {
    let mut out = Vec::new();
    extract_into(config, labels, families, clusters, |id, value| {
        out.push((id, value.to_string()));
    });
    out
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    raw: f64,
    acc: f64,
    stamp: u64,
}

/// Sparse weights with lazily maintained running sums for averaging. Call
/// [`WeightVector::tick`] once per training example; updates within that
/// example then fold into the average correctly.
#[derive(Debug, Clone, Default)]
pub struct WeightVector {
    cells: HashMap<FeatureId, Cell>,
    ticks: u64,
}

impl WeightVector {
    pub fn new() -> Self {
        WeightVector::default()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Advances the example counter.
    pub fn tick(&mut self) {
        self.ticks += 1;
    }

    /// Adds `delta` to a weight at the current tick.
    pub fn update(&mut self, id: FeatureId, delta: f64) {
        let upto = self.ticks.saturating_sub(1);
        let cell = self.cells.entry(id).or_default();
        cell.acc += cell.raw * (upto - cell.stamp) as f64;
        cell.stamp = upto;
        cell.raw += delta;
    }

    pub fn raw(&self, id: FeatureId) -> f64 {
        self.cells.get(&id).map_or(0.0, |c| c.raw)
    }

    /// Mean of the weight's value over ticks 1..=now; the raw value if no
    /// ticks have elapsed.
    pub fn averaged(&self, id: FeatureId) -> f64 {
        let Some(cell) = self.cells.get(&id) else { return 0.0 };
        if self.ticks == 0 {
            return cell.raw;
        }
        (cell.acc + cell.raw * (self.ticks - cell.stamp) as f64) / self.ticks as f64
    }

    /// Installs a weight directly, as when loading a saved model.
    pub fn set_raw(&mut self, id: FeatureId, value: f64) {
        self.cells.insert(id, Cell { raw: value, acc: 0.0, stamp: 0 });
    }

    pub fn score_raw(&self, ids: &[FeatureId]) -> f64 {
        ids.iter().map(|id| self.raw(*id)).sum()
    }

    /// Nonzero averaged weights sorted by feature id.
    pub fn averaged_entries(&self) -> Vec<(FeatureId, f64)> {
        let mut entries: Vec<(FeatureId, f64)> = self
            .cells
            .keys()
            .map(|&id| (id, self.averaged(id)))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries
    }
}

/// Scores one action against pre-extracted configuration features.
pub fn score_action(
    weights: &WeightVector,
    features: &[FeatureId],
    labels: &Alphabet,
    action: Action,
) -> f64 {
    let label = action.label.map(|l| labels.resolve(l));
    features
        .iter()
        .map(|&f| weights.raw(conjoin(f, action.kind, label)))
        .sum()
}
