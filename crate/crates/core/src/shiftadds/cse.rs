//! Greedy common-subexpression sharing for constant multiplication blocks.
//!
//! The optimizer works on an explicit sharing plan before any node is built:
//!
//! 1. **Canonicalization.** Every output row is normalized to an odd,
//!    sign-normalized vector; duplicate, negated, shifted, zero, and
//!    power-of-two rows collapse to bindings of one realization.
//! 2. **Row pairing.** An output can be produced from another output and a
//!    cheap correction (`y_j = (r_i + r_j)x - y_i`), trading its whole digit
//!    tree for one subtractor plus the correction vector.
//! 3. **Factoring.** A vector can be rewritten as `a * u + residual` over an
//!    already-needed vector `u`, where `a` has at most two signed digits.
//! 4. **Pattern extraction.** The most frequent two-term subexpression
//!    across all remaining digit lists is hoisted into its own node until no
//!    pattern occurs twice.
//!
//! Plans are then assembled with balanced adder trees. Every transformation
//! is applied only when it strictly lowers the operation count, so the
//! result never exceeds the digit-recoding baseline.

use std::collections::{BTreeSet, HashMap};

use super::{
    build_tree, canon_vector, combine, sign_normalize, unit_index, vector_digits, CmBlockSpec,
    ShiftAddDag, Term, TermSource,
};
use crate::fixedpoint::{magnitude_bits, nonzero_digits, to_csd};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AtomSrc {
    Input(usize),
    Entry(usize),
}

/// One addend of an entry's digit list: `±(src << shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Atom {
    src: AtomSrc,
    shift: u32,
    neg: bool,
}

#[derive(Debug, Clone, Copy)]
enum ComboRef {
    Unit { input: usize, shift: u32, neg: bool },
    Entry { idx: usize, shift: u32, neg: bool },
}

#[derive(Debug, Clone)]
enum Plan {
    /// Sum the atoms with a balanced tree.
    Tree,
    /// One node: `combo - base` (or `combo + base` when `add_base`).
    Combined { base: usize, combo: ComboRef, add_base: bool },
}

/// A vector value the network must materialize.
struct Entry {
    /// Exact coefficient vector the realized term equals. Always
    /// sign-normalized: the first nonzero component is positive.
    value: Vec<i64>,
    atoms: Vec<Atom>,
    plan: Plan,
    row_target: bool,
    binding_count: usize,
    /// Serves as the base of a combined output and must stay realized.
    pinned: bool,
}

enum Binding {
    Zero,
    Unit { input: usize, shift: u32, neg: bool },
    Entry { idx: usize, shift: u32, neg: bool },
}

/// Synthesizes a block with greedy sharing. Infallible: every block has at
/// least the digit-recoding realization.
pub fn optimize_greedy(spec: &CmBlockSpec) -> ShiftAddDag {
    let n = spec.num_inputs();
    let mut entries: Vec<Entry> = Vec::new();
    let mut map: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut bindings: Vec<Binding> = Vec::with_capacity(spec.num_outputs());
    for row in &spec.rows {
        let binding = match resolve(row, &entries, &map) {
            Resolved::Zero => Binding::Zero,
            Resolved::Unit { input, shift, neg } => Binding::Unit { input, shift, neg },
            Resolved::Existing { idx, shift, neg } => {
                entries[idx].binding_count += 1;
                Binding::Entry { idx, shift, neg }
            }
            Resolved::New { canon, shift, neg } => {
                let idx = entries.len();
                entries.push(Entry {
                    atoms: csd_atoms(&canon),
                    value: canon.clone(),
                    plan: Plan::Tree,
                    row_target: true,
                    binding_count: 1,
                    pinned: false,
                });
                map.insert(canon, idx);
                Binding::Entry { idx, shift, neg }
            }
        };
        bindings.push(binding);
    }
    stage_pairs(&mut entries, &mut map);
    stage_factor(&mut entries);
    stage_patterns(&mut entries, &mut map);
    assemble(n, &entries, &bindings)
}

/// How a raw coefficient vector can be referenced.
enum Resolved {
    Zero,
    Unit { input: usize, shift: u32, neg: bool },
    Existing { idx: usize, shift: u32, neg: bool },
    New { canon: Vec<i64>, shift: u32, neg: bool },
}

fn resolve(raw: &[i64], entries: &[Entry], map: &HashMap<Vec<i64>, usize>) -> Resolved {
    let Some((canon, shift, neg)) = canon_vector(raw) else {
        return Resolved::Zero;
    };
    if let Some(input) = unit_index(&canon) {
        return Resolved::Unit { input, shift, neg };
    }
    if let Some(&idx) = map.get(&canon) {
        // The stored entry realizes `canon << v` for some v; it serves this
        // reference only when no right shift would be required.
        let v = canon_vector(&entries[idx].value).expect("entry values are nonzero").1;
        if v <= shift {
            return Resolved::Existing { idx, shift: shift - v, neg };
        }
    }
    Resolved::New { canon, shift, neg }
}

/// Signed-digit expansion of a vector over the block inputs.
fn csd_atoms(v: &[i64]) -> Vec<Atom> {
    let mut atoms = Vec::new();
    for (input, &c) in v.iter().enumerate() {
        for (position, &d) in to_csd(c).digits.iter().enumerate() {
            if d != 0 {
                atoms.push(Atom {
                    src: AtomSrc::Input(input),
                    shift: position as u32,
                    neg: d < 0,
                });
            }
        }
    }
    atoms
}

/// True when `from`'s realization (transitively) requires `target`'s.
fn depends_on(entries: &[Entry], from: usize, target: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = vec![false; entries.len()];
    while let Some(e) = stack.pop() {
        if e == target {
            return true;
        }
        if std::mem::replace(&mut seen[e], true) {
            continue;
        }
        match &entries[e].plan {
            Plan::Tree => {
                for atom in &entries[e].atoms {
                    if let AtomSrc::Entry(u) = atom.src {
                        stack.push(u);
                    }
                }
            }
            Plan::Combined { base, combo, .. } => {
                stack.push(*base);
                if let ComboRef::Entry { idx, .. } = combo {
                    stack.push(*idx);
                }
            }
        }
    }
    false
}

/// Stage 2: derive one output from another output plus a cheap correction.
fn stage_pairs(entries: &mut Vec<Entry>, map: &mut HashMap<Vec<i64>, usize>) {
    loop {
        // (benefit, j, i, kind) maximizing benefit; ties prefer the smallest
        // j, then i, then the sum form.
        let mut best: Option<(i64, usize, usize, bool)> = None;
        for j in 0..entries.len() {
            let ej = &entries[j];
            let eligible = ej.row_target
                && ej.binding_count == 1
                && !ej.pinned
                && matches!(ej.plan, Plan::Tree);
            if !eligible {
                continue;
            }
            let old_ops = ej.atoms.len() as i64 - 1;
            for i in 0..entries.len() {
                if i == j || !entries[i].row_target || depends_on(entries, i, j) {
                    continue;
                }
                for sum_kind in [true, false] {
                    let raw = pair_vector(&entries[i].value, &entries[j].value, sum_kind);
                    let combo_ops = match resolve(&raw, entries, map) {
                        Resolved::Zero => continue,
                        Resolved::Unit { .. } => 0,
                        Resolved::Existing { idx, .. } => {
                            if idx == j || depends_on(entries, idx, j) {
                                continue;
                            }
                            0
                        }
                        Resolved::New { ref canon, .. } => vector_digits(canon) as i64 - 1,
                    };
                    let benefit = old_ops - (combo_ops + 1);
                    if benefit <= 0 {
                        continue;
                    }
                    let candidate = (benefit, j, i, sum_kind);
                    let better = match best {
                        None => true,
                        Some((bb, bj, bi, bk)) => {
                            (benefit, bj, bi, !bk) > (bb, j, i, !sum_kind)
                        }
                    };
                    if better {
                        best = Some(candidate);
                    }
                }
            }
        }
        let Some((_, j, i, sum_kind)) = best else {
            break;
        };
        let raw = pair_vector(&entries[i].value, &entries[j].value, sum_kind);
        let combo = match resolve(&raw, entries, map) {
            Resolved::Unit { input, shift, neg } => ComboRef::Unit { input, shift, neg },
            Resolved::Existing { idx, shift, neg } => ComboRef::Entry { idx, shift, neg },
            Resolved::New { canon, shift, neg } => {
                let idx = entries.len();
                entries.push(Entry {
                    atoms: csd_atoms(&canon),
                    value: canon.clone(),
                    plan: Plan::Tree,
                    row_target: false,
                    binding_count: 0,
                    pinned: false,
                });
                map.insert(canon, idx);
                ComboRef::Entry { idx, shift, neg }
            }
            Resolved::Zero => unreachable!("candidate was screened"),
        };
        entries[j].plan = Plan::Combined { base: i, combo, add_base: !sum_kind };
        entries[j].atoms.clear();
        entries[i].pinned = true;
    }
}

/// `r_i + r_j` (combined output computes `combo - y_i`) or `r_j - r_i`
/// (combined output computes `combo + y_i`).
fn pair_vector(vi: &[i64], vj: &[i64], sum_kind: bool) -> Vec<i64> {
    vi.iter()
        .zip(vj)
        .map(|(&a, &b)| if sum_kind { a + b } else { b - a })
        .collect()
}

/// Stage 3: rewrite a vector as `a * u + residual` over another entry `u`.
fn stage_factor(entries: &mut [Entry]) {
    for v in 0..entries.len() {
        if !matches!(entries[v].plan, Plan::Tree) || entries[v].atoms.len() < 3 {
            continue;
        }
        let vval = entries[v].value.clone();
        let max_component = vval.iter().map(|c| c.abs()).max().unwrap();
        let max_bits = (magnitude_bits(max_component) + 1).min(20);
        let base_candidates = two_digit_multipliers(max_bits);
        // (digits, u, |a|, sign rank, a, residual) minimized lexicographically.
        let mut best: Option<(u64, usize, i64, i64, i64, Vec<i64>)> = None;
        for u in 0..entries.len() {
            if u == v || depends_on(entries, u, v) {
                continue;
            }
            let uval = entries[u].value.clone();
            let mut candidates = base_candidates.clone();
            for (&vc, &uc) in vval.iter().zip(&uval) {
                if uc != 0 {
                    let q = vc / uc;
                    for a in [q - 1, q, q + 1] {
                        if a != 0 {
                            candidates.insert(a);
                        }
                    }
                }
            }
            for &a in &candidates {
                let Some(residual) = factor_residual(&vval, &uval, a) else {
                    continue;
                };
                let digits = u64::from(nonzero_digits(a)) + vector_digits(&residual);
                let candidate = (digits, u, a.abs(), i64::from(a < 0), a, residual);
                if best.as_ref().is_none_or(|b| {
                    (candidate.0, candidate.1, candidate.2, candidate.3)
                        < (b.0, b.1, b.2, b.3)
                }) {
                    best = Some(candidate);
                }
            }
        }
        let Some((digits, u, _, _, a, residual)) = best else {
            continue;
        };
        if digits >= entries[v].atoms.len() as u64 {
            continue;
        }
        let mut atoms = Vec::new();
        for (position, &d) in to_csd(a).digits.iter().enumerate() {
            if d != 0 {
                atoms.push(Atom {
                    src: AtomSrc::Entry(u),
                    shift: position as u32,
                    neg: d < 0,
                });
            }
        }
        atoms.extend(csd_atoms(&residual));
        entries[v].atoms = atoms;
    }
}

/// All nonzero multipliers with at most two signed digits and at most
/// `max_bits + 1` magnitude bits, both signs.
fn two_digit_multipliers(max_bits: u32) -> BTreeSet<i64> {
    let mut set = BTreeSet::new();
    let cap = 1i64 << max_bits;
    for p in 0..=max_bits {
        let high = 1i64 << p;
        if high <= cap {
            set.insert(high);
            set.insert(-high);
        }
        for q in 0..p {
            for value in [high + (1i64 << q), high - (1i64 << q)] {
                if value <= cap {
                    set.insert(value);
                    set.insert(-value);
                }
            }
        }
    }
    set
}

/// `v - a * u`, or `None` on overflow risk.
fn factor_residual(v: &[i64], u: &[i64], a: i64) -> Option<Vec<i64>> {
    v.iter()
        .zip(u)
        .map(|(&vc, &uc)| {
            let r = i128::from(vc) - i128::from(a) * i128::from(uc);
            if r.abs() <= i128::from(i64::MAX >> 2) {
                Some(r as i64)
            } else {
                None
            }
        })
        .collect()
}

type SrcKey = (u8, usize);
/// `(first src, first rel shift, second src, second rel shift, second neg)`
/// with the first operand positive and the smaller relative shift zero.
type PatKey = (SrcKey, u32, SrcKey, u32, bool);

#[derive(Debug, Clone, Copy)]
struct Occurrence {
    entry: usize,
    first: usize,
    second: usize,
    base: u32,
    flip: bool,
}

enum PatternAction {
    Unit { input: usize, shift: u32, neg: bool },
    Reuse { idx: usize, shift: u32, neg: bool },
    Create { value: Vec<i64>, flip: bool },
}

/// Stage 4: hoist the most frequent two-atom pattern until none repeats.
fn stage_patterns(entries: &mut Vec<Entry>, map: &mut HashMap<Vec<i64>, usize>) {
    // Each application strictly reduces the operation count, so this loop
    // terminates; the cap only bounds pathological inputs.
    for _ in 0..10_000 {
        if !apply_best_pattern(entries, map) {
            break;
        }
    }
}

fn src_key(src: AtomSrc) -> SrcKey {
    match src {
        AtomSrc::Input(k) => (0, k),
        AtomSrc::Entry(e) => (1, e),
    }
}

fn basis_vector(src: AtomSrc, entries: &[Entry], n: usize) -> Vec<i64> {
    match src {
        AtomSrc::Input(k) => {
            let mut v = vec![0; n];
            v[k] = 1;
            v
        }
        AtomSrc::Entry(e) => entries[e].value.clone(),
    }
}

fn pattern_value(key: &PatKey, entries: &[Entry], n: usize) -> Option<Vec<i64>> {
    let from_key = |sk: SrcKey| match sk {
        (0, k) => AtomSrc::Input(k),
        (_, e) => AtomSrc::Entry(e),
    };
    let a = basis_vector(from_key(key.0), entries, n);
    let b = basis_vector(from_key(key.2), entries, n);
    let sign = if key.4 { -1i128 } else { 1i128 };
    a.iter()
        .zip(&b)
        .map(|(&ac, &bc)| {
            let v = (i128::from(ac) << key.1) + sign * (i128::from(bc) << key.3);
            if v.abs() <= i128::from(i64::MAX >> 2) {
                Some(v as i64)
            } else {
                None
            }
        })
        .collect()
}

fn apply_best_pattern(entries: &mut Vec<Entry>, map: &mut HashMap<Vec<i64>, usize>) -> bool {
    let n = entries
        .first()
        .map(|e| e.value.len())
        .unwrap_or(0);
    let mut patterns: HashMap<PatKey, Vec<Occurrence>> = HashMap::new();
    for (e, entry) in entries.iter().enumerate() {
        if !matches!(entry.plan, Plan::Tree) {
            continue;
        }
        for i in 0..entry.atoms.len() {
            for j in i + 1..entry.atoms.len() {
                let (mut p, mut q) = (entry.atoms[i], entry.atoms[j]);
                if (src_key(q.src), q.shift, q.neg) < (src_key(p.src), p.shift, p.neg) {
                    std::mem::swap(&mut p, &mut q);
                }
                let base = p.shift.min(q.shift);
                let flip = p.neg;
                let key = (
                    src_key(p.src),
                    p.shift - base,
                    src_key(q.src),
                    q.shift - base,
                    q.neg ^ flip,
                );
                patterns.entry(key).or_default().push(Occurrence {
                    entry: e,
                    first: i,
                    second: j,
                    base,
                    flip,
                });
            }
        }
    }
    let mut keys: Vec<PatKey> = patterns.keys().copied().collect();
    keys.sort_unstable();
    let mut best: Option<(i64, PatKey, Vec<Occurrence>, PatternAction)> = None;
    for key in keys {
        let Some(value) = pattern_value(&key, entries, n) else {
            continue;
        };
        let (action, creation_cost, excluded) = match resolve(&value, entries, map) {
            Resolved::Zero => continue,
            Resolved::Unit { input, shift, neg } => {
                (PatternAction::Unit { input, shift, neg }, 0, None)
            }
            Resolved::Existing { idx, shift, neg } => {
                (PatternAction::Reuse { idx, shift, neg }, 0, Some(idx))
            }
            Resolved::New { .. } => {
                let (norm, flip) = sign_normalize(&value);
                (PatternAction::Create { value: norm, flip }, 1, None)
            }
        };
        // Keep disjoint occurrences, skipping any that would form a cycle
        // with a reused entry.
        let mut accepted: Vec<Occurrence> = Vec::new();
        let mut used: Vec<(usize, usize)> = Vec::new();
        for occ in &patterns[&key] {
            if Some(occ.entry) == excluded {
                continue;
            }
            if let Some(p) = excluded {
                if depends_on(entries, p, occ.entry) {
                    continue;
                }
            }
            let clash = used.iter().any(|&(e, a)| {
                e == occ.entry && (a == occ.first || a == occ.second)
            });
            if clash {
                continue;
            }
            used.push((occ.entry, occ.first));
            used.push((occ.entry, occ.second));
            accepted.push(*occ);
        }
        let savings = accepted.len() as i64 - creation_cost;
        if savings >= 1 && best.as_ref().is_none_or(|b| savings > b.0) {
            best = Some((savings, key, accepted, action));
        }
    }
    let Some((_, key, accepted, action)) = best else {
        return false;
    };
    let (src, extra_shift, base_neg) = match action {
        PatternAction::Unit { input, shift, neg } => (AtomSrc::Input(input), shift, neg),
        PatternAction::Reuse { idx, shift, neg } => (AtomSrc::Entry(idx), shift, neg),
        PatternAction::Create { value, flip } => {
            let from_key = |sk: SrcKey| match sk {
                (0, k) => AtomSrc::Input(k),
                (_, e) => AtomSrc::Entry(e),
            };
            let idx = entries.len();
            let canon_key = canon_vector(&value).expect("pattern values are nonzero").0;
            entries.push(Entry {
                atoms: vec![
                    Atom { src: from_key(key.0), shift: key.1, neg: flip },
                    Atom { src: from_key(key.2), shift: key.3, neg: key.4 ^ flip },
                ],
                value,
                plan: Plan::Tree,
                row_target: false,
                binding_count: 0,
                pinned: false,
            });
            map.entry(canon_key).or_insert(idx);
            (AtomSrc::Entry(idx), 0, flip)
        }
    };
    // Group accepted occurrences by entry and rewrite each digit list.
    let mut by_entry: HashMap<usize, Vec<Occurrence>> = HashMap::new();
    for occ in accepted {
        by_entry.entry(occ.entry).or_default().push(occ);
    }
    let mut hosts: Vec<usize> = by_entry.keys().copied().collect();
    hosts.sort_unstable();
    for host in hosts {
        let occs = &by_entry[&host];
        let removed: Vec<usize> = occs.iter().flat_map(|o| [o.first, o.second]).collect();
        let mut atoms: Vec<Atom> = entries[host]
            .atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, a)| *a)
            .collect();
        for occ in occs {
            atoms.push(Atom {
                src,
                shift: occ.base + extra_shift,
                neg: occ.flip ^ base_neg,
            });
        }
        normalize_atoms(&mut atoms);
        assert!(!atoms.is_empty(), "a nonzero vector cannot cancel to nothing");
        entries[host].atoms = atoms;
    }
    true
}

/// Cancels `+t, -t` pairs and merges duplicate atoms into a higher shift.
fn normalize_atoms(atoms: &mut Vec<Atom>) {
    loop {
        let mut change: Option<(usize, usize)> = None;
        'scan: for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].src == atoms[j].src && atoms[i].shift == atoms[j].shift {
                    change = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((i, j)) = change else { break };
        if atoms[i].neg != atoms[j].neg {
            atoms.remove(j);
            atoms.remove(i);
        } else {
            atoms[i].shift += 1;
            atoms.remove(j);
        }
    }
}

/// Stage 5: realize every entry and bind the outputs.
fn assemble(n: usize, entries: &[Entry], bindings: &[Binding]) -> ShiftAddDag {
    let mut nodes = Vec::new();
    let mut realized: Vec<Option<Term>> = vec![None; entries.len()];
    loop {
        let mut progressed = false;
        let mut remaining = false;
        for e in 0..entries.len() {
            if realized[e].is_some() {
                continue;
            }
            let ready = match &entries[e].plan {
                Plan::Tree => entries[e].atoms.iter().all(|a| match a.src {
                    AtomSrc::Entry(u) => realized[u].is_some(),
                    AtomSrc::Input(_) => true,
                }),
                Plan::Combined { base, combo, .. } => {
                    realized[*base].is_some()
                        && match combo {
                            ComboRef::Entry { idx, .. } => realized[*idx].is_some(),
                            ComboRef::Unit { .. } => true,
                        }
                }
            };
            if !ready {
                remaining = true;
                continue;
            }
            let term = match &entries[e].plan {
                Plan::Tree => {
                    let terms: Vec<Term> = entries[e]
                        .atoms
                        .iter()
                        .map(|a| atom_term(a, &realized))
                        .collect();
                    if terms.len() == 1 {
                        terms[0]
                    } else {
                        build_tree(&terms, &mut nodes)
                    }
                }
                Plan::Combined { base, combo, add_base } => {
                    let combo_term = match combo {
                        ComboRef::Unit { input, shift, neg } => Term {
                            source: TermSource::Input(*input),
                            shift: *shift,
                            negate: *neg,
                        },
                        ComboRef::Entry { idx, shift, neg } => {
                            realized[*idx].unwrap().compose(*shift, *neg)
                        }
                    };
                    let base_term = realized[*base].unwrap().compose(0, !add_base);
                    combine(combo_term, base_term, &mut nodes)
                }
            };
            realized[e] = Some(term);
            progressed = true;
        }
        if !remaining {
            break;
        }
        assert!(progressed, "sharing plan contains a dependency cycle");
    }
    let outputs = bindings
        .iter()
        .map(|b| match b {
            Binding::Zero => Term::zero(),
            Binding::Unit { input, shift, neg } => Term {
                source: TermSource::Input(*input),
                shift: *shift,
                negate: *neg,
            },
            Binding::Entry { idx, shift, neg } => realized[*idx].unwrap().compose(*shift, *neg),
        })
        .collect();
    ShiftAddDag { num_inputs: n, nodes, outputs }
}

fn atom_term(atom: &Atom, realized: &[Option<Term>]) -> Term {
    match atom.src {
        AtomSrc::Input(k) => Term {
            source: TermSource::Input(k),
            shift: atom.shift,
            negate: atom.neg,
        },
        AtomSrc::Entry(u) => realized[u]
            .expect("assembly order guarantees realized sources")
            .compose(atom.shift, atom.neg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shiftadds::dbr::{dbr_opcount, synth_dbr};
    use crate::shiftadds::{adder_depth, verify_dag};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(rows: Vec<Vec<i64>>) -> CmBlockSpec {
        CmBlockSpec::new(rows).unwrap()
    }

    #[test]
    fn worked_matrix_halves_the_recoding_cost() {
        let spec = spec(vec![vec![11, 3], vec![5, 13]]);
        let dag = optimize_greedy(&spec);
        assert!(verify_dag(&dag, &spec, 200));
        assert_eq!(dag.opcount(), 4);
        assert_eq!(synth_dbr(&spec).opcount(), 8);
    }

    #[test]
    fn worked_matrix_listing_shows_the_shared_plan() {
        // One output is derived from the other: y1 = 16(x1 + x2) - y2.
        let dag = optimize_greedy(&spec(vec![vec![11, 3], vec![5, 13]]));
        let expected = "\
input x1
input x2
t1 = x1 + x2
t2 = t1 + (t1 << 2)
t3 = t2 + (x2 << 3)
t4 = (t1 << 4) - t3
y1 = t4
y2 = t3
";
        assert_eq!(dag.listing(), expected);
        assert_eq!(adder_depth(&dag), 4);
    }

    #[test]
    fn single_constant_45_shares_its_repeated_pattern() {
        // 45 = 101101 reuses x - 4x at two positions: two operations beat
        // the three of digit recoding.
        let spec = spec(vec![vec![45]]);
        let dag = optimize_greedy(&spec);
        assert!(verify_dag(&dag, &spec, 50));
        assert_eq!(dag.opcount(), 2);
        assert_eq!(dbr_opcount(&spec), 3);
    }

    #[test]
    fn multiple_constants_share_intermediate_outputs() {
        // {3, 5, 13}: 13 = 16 - 3 rides on the realization of 3.
        let spec = spec(vec![vec![3], vec![5], vec![13]]);
        let dag = optimize_greedy(&spec);
        assert!(verify_dag(&dag, &spec, 50));
        assert_eq!(dag.opcount(), 3);
        assert_eq!(dbr_opcount(&spec), 4);
    }

    #[test]
    fn trivial_rows_cost_nothing() {
        let spec = spec(vec![vec![8], vec![0], vec![-2], vec![1]]);
        let dag = optimize_greedy(&spec);
        assert!(verify_dag(&dag, &spec, 20));
        assert_eq!(dag.opcount(), 0);
        assert_eq!(dag.outputs[0], Term::input(0).compose(3, false));
        assert_eq!(dag.outputs[1], Term::zero());
        assert_eq!(dag.outputs[2], Term::input(0).compose(1, true));
        assert_eq!(dag.outputs[3], Term::input(0));
    }

    #[test]
    fn duplicate_and_scaled_rows_share_one_realization() {
        let spec = spec(vec![vec![11, 3], vec![44, 12], vec![-11, -3]]);
        let dag = optimize_greedy(&spec);
        assert!(verify_dag(&dag, &spec, 100));
        // All three rows are shifts/negations of one vector, so they share a
        // single realization; factoring 3 out of (3, 3) then adding 8*x1
        // lands it in three operations where plain recoding needs four.
        assert_eq!(dag.outputs[1], dag.outputs[0].compose(2, false));
        assert_eq!(dag.outputs[2], dag.outputs[0].compose(0, true));
        assert_eq!(dag.opcount(), 3);
    }

    #[test]
    fn sharing_never_loses_to_recoding_on_random_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let m = rng.gen_range(1..=3);
            let n = rng.gen_range(1..=3);
            let rows: Vec<Vec<i64>> =
                (0..m).map(|_| (0..n).map(|_| rng.gen_range(-512..=512)).collect()).collect();
            let spec = CmBlockSpec::new(rows).unwrap();
            let dag = optimize_greedy(&spec);
            assert!(verify_dag(&dag, &spec, 8), "sharing broke {:?}", spec.rows);
            assert!(
                dag.opcount() <= dbr_opcount(&spec),
                "sharing used {} ops where recoding needs {} on {:?}",
                dag.opcount(),
                dbr_opcount(&spec),
                spec.rows
            );
        }
    }

    #[test]
    fn optimizer_is_deterministic() {
        let spec = spec(vec![vec![45, -17, 9], vec![23, 3, -45], vec![7, 99, 12]]);
        let a = optimize_greedy(&spec);
        let b = optimize_greedy(&spec);
        assert_eq!(a, b);
        assert!(verify_dag(&a, &spec, 50));
    }
}
