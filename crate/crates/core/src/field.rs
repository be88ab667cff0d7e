//! Arithmetic over GF(2^m) and the incremental row-echelon bookkeeping that
//! receivers (and the sender's mirrors of them) use to track which packets
//! are seen and which are decoded.
//!
//! Columns are ordered oldest packet first and pivots are always the
//! leftmost nonzero column of a row, so a packet is *seen* exactly when it
//! is a pivot column and *decoded* exactly when its pivot row is a unit
//! vector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A field element, stored in the low `m` bits.
pub type Elem = u16;

pub const MAX_FIELD_BITS: u8 = 16;

/// Reduction polynomial for each extension degree, indexed by `m`.
/// Every entry is irreducible of degree `m`; `m = 8` uses the AES polynomial.
const REDUCTION_POLYNOMIALS: [u32; 17] = [
    0,       // unused
    0x3,     // x + 1
    0x7,     // x^2 + x + 1
    0xB,     // x^3 + x + 1
    0x13,    // x^4 + x + 1
    0x25,    // x^5 + x^2 + 1
    0x43,    // x^6 + x + 1
    0x83,    // x^7 + x + 1
    0x11B,   // x^8 + x^4 + x^3 + x + 1
    0x211,   // x^9 + x^4 + 1
    0x409,   // x^10 + x^3 + 1
    0x805,   // x^11 + x^2 + 1
    0x1053,  // x^12 + x^6 + x^4 + x + 1
    0x201B,  // x^13 + x^4 + x^3 + x + 1
    0x4443,  // x^14 + x^10 + x^6 + x + 1
    0x8003,  // x^15 + x + 1
    0x1100B, // x^16 + x^12 + x^3 + x + 1
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("field extension degree must be in 1..=16, got {0}")]
    UnsupportedDegree(u8),
    #[error("coded packet support must be strictly increasing")]
    UnsortedSupport,
    #[error("coefficient {coefficient:#x} is not a nonzero element of GF(2^{bits})")]
    BadCoefficient { coefficient: Elem, bits: u8 },
    #[error("coded packet has empty support")]
    EmptySupport,
}

struct Tables {
    exp: Vec<Elem>,
    log: Vec<u32>,
}

/// Shift-and-add multiply, used only to build the log/antilog tables.
fn mul_shift_add(mut a: u32, mut b: u32, bits: u8, poly: u32) -> u32 {
    let top = 1u32 << bits;
    let mut acc = 0u32;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= poly;
        }
    }
    acc
}

fn build_tables(bits: u8) -> Tables {
    let poly = REDUCTION_POLYNOMIALS[bits as usize];
    let order = (1u32 << bits) - 1;
    // Smallest generator of the multiplicative group.
    let generator = (1..=order.max(1))
        .find(|&g| {
            let mut x = 1u32;
            for k in 1..=order {
                x = mul_shift_add(x, g, bits, poly);
                if x == 1 {
                    return k == order;
                }
            }
            false
        })
        .expect("multiplicative group of a finite field is cyclic");
    let mut exp = vec![0; 2 * order as usize];
    let mut log = vec![0; (order + 1) as usize];
    let mut x = 1u32;
    for k in 0..order {
        exp[k as usize] = x as Elem;
        exp[(k + order) as usize] = x as Elem;
        log[x as usize] = k;
        x = mul_shift_add(x, generator, bits, poly);
    }
    Tables { exp, log }
}

fn tables(bits: u8) -> &'static Tables {
    static TABLES: [OnceLock<Tables>; 17] = [const { OnceLock::new() }; 17];
    TABLES[bits as usize].get_or_init(|| build_tables(bits))
}

/// GF(2^m) with the canonical reduction polynomial for `m`.
#[derive(Clone, Copy)]
pub struct Field {
    bits: u8,
    tables: &'static Tables,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{})", self.bits)
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.bits == other.bits
    }
}

impl Eq for Field {}

impl Field {
    pub fn new(bits: u8) -> Result<Self, FieldError> {
        if !(1..=MAX_FIELD_BITS).contains(&bits) {
            return Err(FieldError::UnsupportedDegree(bits));
        }
        Ok(Self {
            bits,
            tables: tables(bits),
        })
    }

    pub fn gf2() -> Self {
        Self::new(1).unwrap()
    }

    pub fn gf256() -> Self {
        Self::new(8).unwrap()
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn reduction_polynomial(&self) -> u32 {
        REDUCTION_POLYNOMIALS[self.bits as usize]
    }

    /// Number of field elements, `2^m`.
    pub fn size(&self) -> u32 {
        1u32 << self.bits
    }

    pub fn contains(&self, a: Elem) -> bool {
        (a as u32) < self.size()
    }

    #[inline]
    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a == 0 || b == 0 {
            return 0;
        }
        let t = self.tables;
        t.exp[(t.log[a as usize] + t.log[b as usize]) as usize]
    }

    /// Multiplicative inverse. Panics on zero.
    #[inline]
    pub fn inv(&self, a: Elem) -> Elem {
        assert_ne!(a, 0, "inverse of zero");
        let order = self.size() - 1;
        let t = self.tables;
        t.exp[((order - t.log[a as usize]) % order) as usize]
    }

    #[inline]
    pub fn div(&self, a: Elem, b: Elem) -> Elem {
        self.mul(a, self.inv(b))
    }
}

/// Global sequence number of an original packet, zero-based. Displayed
/// one-based (`p1`, `p2`, ...).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PacketId(pub u32);

impl PacketId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn next(self) -> PacketId {
        PacketId(self.0 + 1)
    }
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0 + 1)
    }
}

/// A linear combination of original packets. Only the coefficient vector is
/// simulated; payloads are not carried.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodedPacket {
    terms: Vec<(PacketId, Elem)>,
}

impl CodedPacket {
    pub fn uncoded(packet: PacketId) -> Self {
        Self {
            terms: vec![(packet, 1)],
        }
    }

    /// Builds a packet from `(packet, coefficient)` pairs. Support must be
    /// strictly increasing and every coefficient a nonzero element of `field`.
    pub fn from_terms(
        field: Field,
        terms: impl IntoIterator<Item = (PacketId, Elem)>,
    ) -> Result<Self, FieldError> {
        let terms: Vec<_> = terms.into_iter().collect();
        if terms.is_empty() {
            return Err(FieldError::EmptySupport);
        }
        if terms.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(FieldError::UnsortedSupport);
        }
        if let Some(&(_, c)) = terms.iter().find(|(_, c)| *c == 0 || !field.contains(*c)) {
            return Err(FieldError::BadCoefficient {
                coefficient: c,
                bits: field.bits(),
            });
        }
        Ok(Self { terms })
    }

    /// XOR of the given packets (all coefficients 1).
    pub fn xor(packets: impl IntoIterator<Item = PacketId>) -> Self {
        let support: BTreeSet<PacketId> = packets.into_iter().collect();
        assert!(!support.is_empty(), "empty support");
        Self {
            terms: support.into_iter().map(|p| (p, 1)).collect(),
        }
    }

    pub fn terms(&self) -> &[(PacketId, Elem)] {
        &self.terms
    }

    pub fn support(&self) -> impl Iterator<Item = PacketId> + '_ {
        self.terms.iter().map(|(p, _)| *p)
    }

    pub fn coefficients(&self) -> impl Iterator<Item = Elem> + '_ {
        self.terms.iter().map(|(_, c)| *c)
    }

    pub fn coefficient(&self, packet: PacketId) -> Elem {
        self.terms
            .binary_search_by_key(&packet, |(p, _)| *p)
            .map(|i| self.terms[i].1)
            .unwrap_or(0)
    }

    pub fn degree(&self) -> usize {
        self.terms.len()
    }

    pub fn is_uncoded(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].1 == 1
    }

    /// One-based support joined by `+`, e.g. `4+6`.
    pub fn support_label(&self) -> String {
        self.terms
            .iter()
            .map(|(p, _)| (p.0 + 1).to_string())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Coefficients as lowercase hex joined by `:`.
    pub fn coefficient_label(&self) -> String {
        self.terms
            .iter()
            .map(|(_, c)| format!("{c:x}"))
            .collect::<Vec<_>>()
            .join(":")
    }
}

impl fmt::Display for CodedPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (p, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            if *c != 1 {
                write!(f, "{c:#x}·")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Result of adding a received combination to a [`KnowledgeMatrix`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Insertion {
    pub innovative: bool,
    pub newly_seen: Option<PacketId>,
    pub newly_decoded: Vec<PacketId>,
}

/// Sparse row: pivot first (coefficient 1), then non-pivot columns ascending.
type Row = Vec<(PacketId, Elem)>;

/// A receiver's received combinations in reduced row echelon form.
///
/// Unit rows are held as a decoded set rather than explicit rows; their
/// columns are zero in every other row, so incoming vectors simply drop
/// those coefficients.
#[derive(Clone, PartialEq, Eq)]
pub struct KnowledgeMatrix {
    field: Field,
    rows: BTreeMap<PacketId, Row>,
    decoded: BTreeSet<PacketId>,
}

impl fmt::Debug for KnowledgeMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeMatrix")
            .field("field", &self.field)
            .field("rank", &self.rank())
            .field("decoded", &self.decoded)
            .field("pending_rows", &self.rows.len())
            .finish()
    }
}

impl KnowledgeMatrix {
    pub fn new(field: Field) -> Self {
        Self {
            field,
            rows: BTreeMap::new(),
            decoded: BTreeSet::new(),
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn rank(&self) -> usize {
        self.rows.len() + self.decoded.len()
    }

    pub fn is_seen(&self, packet: PacketId) -> bool {
        self.decoded.contains(&packet) || self.rows.contains_key(&packet)
    }

    pub fn is_decoded(&self, packet: PacketId) -> bool {
        self.decoded.contains(&packet)
    }

    pub fn seen_set(&self) -> BTreeSet<PacketId> {
        self.decoded
            .iter()
            .chain(self.rows.keys())
            .copied()
            .collect()
    }

    pub fn decoded_set(&self) -> &BTreeSet<PacketId> {
        &self.decoded
    }

    pub fn decoded_count(&self) -> usize {
        self.decoded.len()
    }

    /// Number of received-but-undecoded rows (the current chain length).
    pub fn pending_rows(&self) -> usize {
        self.rows.len()
    }

    /// Oldest unseen packet that occurs in some undecoded row.
    pub fn oldest_pending_unseen(&self) -> Option<PacketId> {
        self.oldest_pending_unseen_where(|_| true)
    }

    /// Like [`Self::oldest_pending_unseen`], restricted to packets accepted
    /// by `keep`.
    pub fn oldest_pending_unseen_where(&self, keep: impl Fn(PacketId) -> bool) -> Option<PacketId> {
        // Non-pivot entries of a row are exactly its unseen packets.
        self.rows
            .values()
            .filter_map(|row| row[1..].iter().map(|(p, _)| *p).find(|&p| keep(p)))
            .min()
    }

    /// Oldest packet below `limit` that is not seen.
    pub fn oldest_unseen_below(&self, limit: PacketId) -> Option<PacketId> {
        (0..limit.0).map(PacketId).find(|&p| !self.is_seen(p))
    }

    /// All rows, unit rows included, as coded packets ordered by pivot.
    pub fn rows(&self) -> Vec<CodedPacket> {
        let mut out: Vec<CodedPacket> = self
            .decoded
            .iter()
            .map(|&p| CodedPacket::uncoded(p))
            .chain(self.rows.values().map(|r| CodedPacket { terms: r.clone() }))
            .collect();
        out.sort_by_key(|r| r.terms[0].0);
        out
    }

    /// Undecoded rows ordered by pivot.
    pub fn pending(&self) -> impl Iterator<Item = CodedPacket> + '_ {
        self.rows.values().map(|r| CodedPacket { terms: r.clone() })
    }

    /// Residual of `packet` after elimination against the current rows.
    fn reduce(&self, packet: &CodedPacket) -> BTreeMap<PacketId, Elem> {
        let f = self.field;
        let mut acc: BTreeMap<PacketId, Elem> = BTreeMap::new();
        let add = |acc: &mut BTreeMap<PacketId, Elem>, p: PacketId, c: Elem| {
            let e = acc.entry(p).or_insert(0);
            *e = f.add(*e, c);
            if *e == 0 {
                acc.remove(&p);
            }
        };
        for &(p, c) in &packet.terms {
            if self.decoded.contains(&p) {
                continue;
            }
            match self.rows.get(&p) {
                // Subtracting c·row clears the pivot and touches only
                // non-pivot columns, so one pass is enough.
                Some(row) => {
                    for &(q, rc) in &row[1..] {
                        add(&mut acc, q, f.mul(c, rc));
                    }
                }
                None => add(&mut acc, p, c),
            }
        }
        acc
    }

    /// Whether receiving `packet` would increase the rank.
    pub fn is_innovative(&self, packet: &CodedPacket) -> bool {
        !self.reduce(packet).is_empty()
    }

    pub fn insert(&mut self, packet: &CodedPacket) -> Insertion {
        let f = self.field;
        let residual = self.reduce(packet);
        let Some((&pivot, &lead)) = residual.iter().next() else {
            return Insertion::default();
        };
        let scale = f.inv(lead);
        let new_row: Row = residual
            .into_iter()
            .map(|(p, c)| (p, f.mul(c, scale)))
            .collect();

        let mut newly_decoded = Vec::new();
        let mut to_decode = Vec::new();
        for (&row_pivot, row) in self.rows.iter_mut() {
            let Ok(pos) = row.binary_search_by_key(&pivot, |(p, _)| *p) else {
                continue;
            };
            let factor = row[pos].1;
            *row = axpy(f, row, factor, &new_row);
            if row.len() == 1 {
                to_decode.push(row_pivot);
            }
        }
        for p in to_decode {
            self.rows.remove(&p);
            self.decoded.insert(p);
            newly_decoded.push(p);
        }
        if new_row.len() == 1 {
            self.decoded.insert(pivot);
            newly_decoded.push(pivot);
        } else {
            self.rows.insert(pivot, new_row);
        }
        newly_decoded.sort_unstable();
        Insertion {
            innovative: true,
            newly_seen: Some(pivot),
            newly_decoded,
        }
    }

    /// Checks the reduced-row-echelon invariants. Used by tests and debug
    /// assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (pivot, row) in &self.rows {
            if row.first() != Some(&(*pivot, 1)) {
                return Err(format!("row {pivot} does not lead with its pivot"));
            }
            if row.len() < 2 {
                return Err(format!("row {pivot} is a unit row outside the decoded set"));
            }
            if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(format!("row {pivot} is not sorted"));
            }
            for &(q, c) in &row[1..] {
                if c == 0 {
                    return Err(format!("row {pivot} stores a zero"));
                }
                if self.rows.contains_key(&q) || self.decoded.contains(&q) {
                    return Err(format!("row {pivot} has an entry in pivot column {q}"));
                }
            }
            if self.decoded.contains(pivot) {
                return Err(format!("{pivot} is both decoded and pending"));
            }
        }
        Ok(())
    }
}

/// `a + k·b` over sorted sparse rows.
fn axpy(f: Field, a: &Row, k: Elem, b: &Row) -> Row {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i].0 < b[j].0);
        let take_b = i == a.len() || (j < b.len() && b[j].0 < a[i].0);
        if take_a {
            out.push(a[i]);
            i += 1;
        } else if take_b {
            out.push((b[j].0, f.mul(k, b[j].1)));
            j += 1;
        } else {
            let c = f.add(a[i].1, f.mul(k, b[j].1));
            if c != 0 {
                out.push((a[i].0, c));
            }
            i += 1;
            j += 1;
        }
    }
    out
}
