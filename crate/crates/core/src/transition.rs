//! Arc-eager transition system: parser configurations, action legality with
//! optional arc constraints, the static oracle, and tree read-out.
//!
//! A configuration holds a stack of token positions (ROOT = 0 at the bottom,
//! never popped), the position of the first unconsumed buffer token, and
//! per-token bookkeeping for assigned heads and children. The four actions:
//!
//! * SHIFT moves the buffer front onto the stack.
//! * REDUCE pops the stack top (which must already have a head).
//! * LEFT_ARC attaches the stack top to the buffer front and pops it.
//! * RIGHT_ARC attaches the buffer front to the stack top and shifts it.
//!
//! Decoding stops when the buffer is empty; tokens still headless at that
//! point are attached to ROOT with a fallback label during read-out.

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::treebank::{is_projective, Sentence};

pub type LabelId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Shift,
    Reduce,
    LeftArc,
    RightArc,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::Shift,
        ActionKind::Reduce,
        ActionKind::LeftArc,
        ActionKind::RightArc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Shift => "SHIFT",
            ActionKind::Reduce => "REDUCE",
            ActionKind::LeftArc => "LEFT_ARC",
            ActionKind::RightArc => "RIGHT_ARC",
        }
    }

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    /// True for the two arc-creating actions, which carry a label.
    pub fn is_arc(self) -> bool {
        matches!(self, ActionKind::LeftArc | ActionKind::RightArc)
    }
}

impl std::fmt::Display for ActionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub label: Option<LabelId>,
}

impl Action {
    pub fn shift() -> Self {
        Action { kind: ActionKind::Shift, label: None }
    }

    pub fn reduce() -> Self {
        Action { kind: ActionKind::Reduce, label: None }
    }

    pub fn left_arc(label: LabelId) -> Self {
        Action { kind: ActionKind::LeftArc, label: Some(label) }
    }

    pub fn right_arc(label: LabelId) -> Self {
        Action { kind: ActionKind::RightArc, label: Some(label) }
    }
}

/// Per-token decoding state: assigned head plus child bookkeeping used by
/// feature extraction.
#[derive(Debug, Clone, Default)]
struct TokenState {
    head: Option<(usize, LabelId)>,
    left1: Option<usize>,
    left2: Option<usize>,
    right1: Option<usize>,
    right2: Option<usize>,
    nleft: u32,
    nright: u32,
    left_labels: u64,
    right_labels: u64,
}

fn label_bit(label: LabelId) -> u64 {
    1u64 << (label as u64).min(63)
}

/// Required head (and optionally label) per token, used to steer decoding
/// toward a partial tree. Positions are 1-based.
#[derive(Debug, Clone)]
pub struct Constraints {
    head: Vec<Option<usize>>,
    label: Vec<Option<LabelId>>,
    count: usize,
}

impl Constraints {
    pub fn new(sentence_len: usize) -> Self {
        Constraints {
            head: vec![None; sentence_len + 1],
            label: vec![None; sentence_len + 1],
            count: 0,
        }
    }

    /// Requires `dep` to be attached to `head`, optionally with a fixed label.
    pub fn require(&mut self, dep: usize, head: usize, label: Option<LabelId>) {
        if self.head[dep].is_none() {
            self.count += 1;
        }
        self.head[dep] = Some(head);
        self.label[dep] = label;
    }

    pub fn required_head(&self, dep: usize) -> Option<usize> {
        self.head[dep]
    }

    pub fn required_label(&self, dep: usize) -> Option<LabelId> {
        self.label[dep]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Builds constraints from the annotated subset of a sentence's tokens,
    /// interning labels as needed.
    pub fn from_partial(sentence: &Sentence, labels: &mut Alphabet) -> Self {
        let mut cs = Constraints::new(sentence.len());
        for tok in &sentence.tokens {
            if let Some(h) = tok.head {
                let label = tok.deprel.as_deref().map(|d| labels.intern(d));
                cs.require(tok.index, h, label);
            }
        }
        cs
    }
}

/// A legal action kind together with a label restriction: `None` allows any
/// label (or no label for SHIFT/REDUCE), `Some(l)` forces that label.
pub type LegalEntry = (ActionKind, Option<LabelId>);

#[derive(Debug, Clone)]
pub struct Configuration<'a> {
    pub sentence: &'a Sentence,
    stack: Vec<usize>,
    front: usize,
    state: Vec<TokenState>,
}

impl<'a> Configuration<'a> {
    pub fn new(sentence: &'a Sentence) -> Self {
        Configuration {
            sentence,
            stack: vec![0],
            front: 1,
            state: vec![TokenState::default(); sentence.len() + 1],
        }
    }

    fn n(&self) -> usize {
        self.sentence.len()
    }

    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    /// Stack top. The stack always holds ROOT at the bottom, so this is total.
    pub fn stack_top(&self) -> usize {
        *self.stack.last().expect("stack holds ROOT")
    }

    /// Position of the first unconsumed buffer token, `n + 1` once empty.
    pub fn front(&self) -> usize {
        self.front
    }

    pub fn buffer_is_empty(&self) -> bool {
        self.front > self.n()
    }

    /// Buffer position at `offset` from the front, if it exists.
    pub fn buffer_at(&self, offset: usize) -> Option<usize> {
        let pos = self.front + offset;
        (pos <= self.n()).then_some(pos)
    }

    /// Decoding ends when the buffer is exhausted.
    pub fn is_terminal(&self) -> bool {
        self.buffer_is_empty()
    }

    pub fn head_of_pos(&self, pos: usize) -> Option<(usize, LabelId)> {
        self.state[pos].head
    }

    pub fn leftmost_child(&self, pos: usize) -> Option<usize> {
        self.state[pos].left1
    }

    pub fn second_leftmost_child(&self, pos: usize) -> Option<usize> {
        self.state[pos].left2
    }

    pub fn rightmost_child(&self, pos: usize) -> Option<usize> {
        self.state[pos].right1
    }

    pub fn second_rightmost_child(&self, pos: usize) -> Option<usize> {
        self.state[pos].right2
    }

    pub fn left_valency(&self, pos: usize) -> u32 {
        self.state[pos].nleft
    }

    pub fn right_valency(&self, pos: usize) -> u32 {
        self.state[pos].nright
    }

    pub fn left_label_mask(&self, pos: usize) -> u64 {
        self.state[pos].left_labels
    }

    pub fn right_label_mask(&self, pos: usize) -> u64 {
        self.state[pos].right_labels
    }

    fn on_stack(&self, pos: usize) -> bool {
        self.stack.contains(&pos)
    }

    fn add_arc(&mut self, head: usize, dep: usize, label: LabelId) {
        self.state[dep].head = Some((head, label));
        let hs = &mut self.state[head];
        if dep < head {
            hs.nleft += 1;
            hs.left_labels |= label_bit(label);
            match hs.left1 {
                Some(l1) if dep > l1 => {
                    if hs.left2.map_or(true, |l2| dep < l2) {
                        hs.left2 = Some(dep);
                    }
                }
                _ => {
                    hs.left2 = hs.left1;
                    hs.left1 = Some(dep);
                }
            }
        } else {
            hs.nright += 1;
            hs.right_labels |= label_bit(label);
            match hs.right1 {
                Some(r1) if dep < r1 => {
                    if hs.right2.map_or(true, |r2| dep > r2) {
                        hs.right2 = Some(dep);
                    }
                }
                _ => {
                    hs.right2 = hs.right1;
                    hs.right1 = Some(dep);
                }
            }
        }
    }

    /// Action kinds permitted by the transition system alone.
    pub fn base_legal(&self) -> Vec<ActionKind> {
        let mut kinds = Vec::with_capacity(4);
        let top = self.stack_top();
        let buffer_nonempty = !self.buffer_is_empty();
        if buffer_nonempty {
            kinds.push(ActionKind::Shift);
        }
        if self.state[top].head.is_some() {
            kinds.push(ActionKind::Reduce);
        }
        if buffer_nonempty && top != 0 && self.state[top].head.is_none() {
            kinds.push(ActionKind::LeftArc);
        }
        if buffer_nonempty {
            kinds.push(ActionKind::RightArc);
        }
        kinds
    }

    /// The required head of `dep` if that constraint is still live: `dep` is
    /// headless and the arc can still be built from this configuration.
    fn active_required_head(&self, cs: &Constraints, dep: usize) -> Option<usize> {
        let head = cs.required_head(dep)?;
        if self.state[dep].head.is_some() {
            return None;
        }
        let reachable = if dep >= self.front {
            self.on_stack(head) || head >= self.front
        } else if self.on_stack(dep) {
            head >= self.front
        } else {
            false
        };
        reachable.then_some(head)
    }

    /// True when the stack top is the required head of some buffer token, so
    /// popping it would orphan that constraint.
    fn top_required_by_buffer(&self, cs: &Constraints) -> bool {
        let top = self.stack_top();
        (self.front..=self.n()).any(|j| cs.required_head(j) == Some(top))
    }

    /// True when some headless stack token must be attached to the buffer
    /// front, so consuming the front would orphan that constraint.
    fn front_required_by_stack(&self, cs: &Constraints) -> bool {
        let front = self.front;
        self.stack
            .iter()
            .any(|&k| k != 0 && self.state[k].head.is_none() && cs.required_head(k) == Some(front))
    }

    fn constrained_entry(&self, kind: ActionKind, cs: &Constraints) -> Option<LegalEntry> {
        let top = self.stack_top();
        match kind {
            ActionKind::Shift => {
                if let Some(h) = self.active_required_head(cs, self.front) {
                    if self.on_stack(h) {
                        return None;
                    }
                }
                if self.front_required_by_stack(cs) {
                    return None;
                }
                Some((kind, None))
            }
            ActionKind::Reduce => {
                if self.top_required_by_buffer(cs) {
                    return None;
                }
                Some((kind, None))
            }
            ActionKind::LeftArc => {
                if self.top_required_by_buffer(cs) {
                    return None;
                }
                match self.active_required_head(cs, top) {
                    Some(h) if h != self.front => None,
                    Some(_) => Some((kind, cs.required_label(top))),
                    None => Some((kind, None)),
                }
            }
            ActionKind::RightArc => {
                if self.front_required_by_stack(cs) {
                    return None;
                }
                match self.active_required_head(cs, self.front) {
                    Some(h) if h != top => None,
                    Some(_) => Some((kind, cs.required_label(self.front))),
                    None => Some((kind, None)),
                }
            }
        }
    }

    /// Legal actions, each with an optional forced label. With constraints,
    /// actions that would make a live constraint arc impossible are removed;
    /// if that removes everything, the unconstrained set is returned so
    /// decoding can always proceed.
    pub fn legal_actions(&self, constraints: Option<&Constraints>) -> Result<Vec<LegalEntry>> {
        if self.is_terminal() {
            return Err(Error::internal("no legal actions in a terminal configuration"));
        }
        let base = self.base_legal();
        let cs = match constraints {
            Some(cs) if !cs.is_empty() => cs,
            _ => return Ok(base.into_iter().map(|k| (k, None)).collect()),
        };
        let constrained: Vec<LegalEntry> = base
            .iter()
            .filter_map(|&k| self.constrained_entry(k, cs))
            .collect();
        if constrained.is_empty() {
            return Ok(base.into_iter().map(|k| (k, None)).collect());
        }
        Ok(constrained)
    }

    /// Applies an action to a copy of this configuration.
    pub fn apply(&self, action: Action) -> Result<Configuration<'a>> {
        if action.kind.is_arc() != action.label.is_some() {
            return Err(Error::internal(format!(
                "{} applied with label {:?}",
                action.kind, action.label
            )));
        }
        let mut next = self.clone();
        let top = self.stack_top();
        match action.kind {
            ActionKind::Shift => {
                if self.buffer_is_empty() {
                    return Err(Error::internal("SHIFT with an empty buffer"));
                }
                next.stack.push(next.front);
                next.front += 1;
            }
            ActionKind::Reduce => {
                if self.state[top].head.is_none() {
                    return Err(Error::internal("REDUCE of a headless stack top"));
                }
                next.stack.pop();
            }
            ActionKind::LeftArc => {
                if self.buffer_is_empty() {
                    return Err(Error::internal("LEFT_ARC with an empty buffer"));
                }
                if top == 0 || self.state[top].head.is_some() {
                    return Err(Error::internal("LEFT_ARC requires a headless non-ROOT stack top"));
                }
                next.add_arc(next.front, top, action.label.unwrap());
                next.stack.pop();
            }
            ActionKind::RightArc => {
                if self.buffer_is_empty() {
                    return Err(Error::internal("RIGHT_ARC with an empty buffer"));
                }
                next.add_arc(top, next.front, action.label.unwrap());
                next.stack.push(next.front);
                next.front += 1;
            }
        }
        Ok(next)
    }

    /// All assigned arcs as `(head, dependent, label)`, in dependent order.
    pub fn arcs(&self) -> Vec<(usize, usize, LabelId)> {
        (1..=self.n())
            .filter_map(|d| self.state[d].head.map(|(h, l)| (h, d, l)))
            .collect()
    }
}

/// Gold heads and label ids in position order; index 0 is unused.
#[derive(Debug, Clone)]
pub struct GoldTree {
    pub heads: Vec<usize>,
    pub labels: Vec<LabelId>,
}

impl GoldTree {
    /// Extracts heads and labels, interning label strings. Tokens without a
    /// dependency label fall back to `fallback`.
    pub fn from_sentence(
        sentence: &Sentence,
        labels: &mut Alphabet,
        fallback: &str,
    ) -> Result<GoldTree> {
        let mut heads = vec![0usize];
        let mut label_ids = vec![0 as LabelId];
        for tok in &sentence.tokens {
            let h = tok.head.ok_or_else(|| {
                Error::data(format!("token {} has no head annotation", tok.index))
            })?;
            heads.push(h);
            label_ids.push(labels.intern(tok.deprel.as_deref().unwrap_or(fallback)));
        }
        Ok(GoldTree { heads, labels: label_ids })
    }
}

/// The canonical action for a configuration under a gold tree: LEFT_ARC and
/// RIGHT_ARC as soon as the gold arc is available, REDUCE when the stack top
/// is finished and blocks an arc between the buffer front and a token below
/// it, SHIFT otherwise.
pub fn static_oracle(config: &Configuration, gold: &GoldTree) -> Result<Action> {
    let b = config.front();
    if config.buffer_is_empty() {
        return Err(Error::internal("oracle queried on a terminal configuration"));
    }
    let s = config.stack_top();
    if s != 0 && config.head_of_pos(s).is_none() && gold.heads[s] == b {
        return Ok(Action::left_arc(gold.labels[s]));
    }
    if gold.heads[b] == s {
        return Ok(Action::right_arc(gold.labels[b]));
    }
    if config.head_of_pos(s).is_some() {
        let below = &config.stack()[..config.stack().len() - 1];
        for &k in below {
            if gold.heads[b] == k || (k != 0 && gold.heads[k] == b) {
                return Ok(Action::reduce());
            }
        }
    }
    Ok(Action::shift())
}

/// Derives the full oracle action sequence for a projective gold tree.
pub fn oracle_sequence(
    sentence: &Sentence,
    labels: &mut Alphabet,
    fallback: &str,
) -> Result<Vec<Action>> {
    if !is_projective(sentence)? {
        return Err(Error::data(
            "the static oracle is undefined for non-projective trees",
        ));
    }
    let gold = GoldTree::from_sentence(sentence, labels, fallback)?;
    let mut config = Configuration::new(sentence);
    let mut actions = Vec::new();
    let limit = 4 * sentence.len() + 8;
    while !config.is_terminal() {
        if actions.len() > limit {
            return Err(Error::internal("oracle derivation failed to terminate"));
        }
        let action = static_oracle(&config, &gold)?;
        config = config.apply(action)?;
        actions.push(action);
    }
    Ok(actions)
}

/// Reads the dependency tree out of a terminal configuration. Tokens left
/// headless are attached to ROOT with the fallback label.
pub fn config_to_tree(
    config: &Configuration,
    labels: &Alphabet,
    fallback: &str,
) -> Result<Sentence> {
    if !config.is_terminal() {
        return Err(Error::internal("tree read-out from a non-terminal configuration"));
    }
    let mut sentence = config.sentence.clone();
    for tok in &mut sentence.tokens {
        match config.head_of_pos(tok.index) {
            Some((h, l)) => {
                tok.head = Some(h);
                tok.deprel = Some(labels.resolve(l).to_string());
            }
            None => {
                tok.head = Some(0);
                tok.deprel = Some(fallback.to_string());
            }
        }
    }
    Ok(sentence)
}
