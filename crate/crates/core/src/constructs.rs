//! The on-wire alphabet: snake characters, tokens, speeds and the per-edge
//! frame that bundles one character per construct lane.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::portgraph::Port;

/// Speed-1 constructs dwell three ticks per processor, speed-3 one tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeedClass {
    Speed1,
    Speed3,
}

pub fn dwell_ticks(s: SpeedClass) -> u8 {
    match s {
        SpeedClass::Speed1 => 3,
        SpeedClass::Speed3 => 1,
    }
}

/// Which protocol instance a construct belongs to. Root-communication and
/// backwards-communication constructs live in disjoint alphabets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Namespace {
    Rca,
    Bca,
}

impl Namespace {
    pub const ALL: [Namespace; 2] = [Namespace::Rca, Namespace::Bca];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The four snake kinds: in-growing, out-growing, in-dying, out-dying.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SnakeClass {
    Ig,
    Og,
    Id,
    Od,
}

impl SnakeClass {
    pub const ALL: [SnakeClass; 4] = [SnakeClass::Ig, SnakeClass::Og, SnakeClass::Id, SnakeClass::Od];

    pub fn is_growing(self) -> bool {
        matches!(self, SnakeClass::Ig | SnakeClass::Og)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn tag(self) -> &'static str {
        match self {
            SnakeClass::Ig => "IG",
            SnakeClass::Og => "OG",
            SnakeClass::Id => "ID",
            SnakeClass::Od => "OD",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    Snake(Namespace, SnakeClass),
    Dfs,
    Forward,
    Back,
    Kill(Namespace),
    Unmark(Namespace),
}

impl Class {
    pub fn snake(self) -> Option<(Namespace, SnakeClass)> {
        match self {
            Class::Snake(ns, c) => Some((ns, c)),
            _ => None,
        }
    }

    fn code(self) -> u8 {
        match self {
            Class::Snake(ns, c) => (ns.index() * 4 + c.index()) as u8,
            Class::Dfs => 8,
            Class::Forward => 9,
            Class::Back => 10,
            Class::Kill(ns) => 11 + ns.index() as u8,
            Class::Unmark(ns) => 13 + ns.index() as u8,
        }
    }

    fn from_code(b: u8) -> Option<Class> {
        let ns = |k: u8| if k == 0 { Namespace::Rca } else { Namespace::Bca };
        Some(match b {
            0..=7 => Class::Snake(ns(b / 4), SnakeClass::ALL[(b % 4) as usize]),
            8 => Class::Dfs,
            9 => Class::Forward,
            10 => Class::Back,
            11 | 12 => Class::Kill(ns(b - 11)),
            13 | 14 => Class::Unmark(ns(b - 13)),
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Head,
    Body,
    Tail,
    Token,
}

/// One symbol on a wire. A `None` port is the `*` placeholder: on a held
/// head/body it is filled with the emitting out-port, on arrival the
/// in-port is filled by [`rewrite_star`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Character {
    pub class: Class,
    pub kind: Kind,
    pub out_port: Option<Port>,
    pub in_port: Option<Port>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstructError {
    #[error("in-port {port} outside 1..={delta}")]
    PortOutOfRange { port: Port, delta: usize },
    #[error("{0} is not a snake character")]
    NotSnake(Character),
    #[error("cannot parse character {0:?}")]
    Parse(String),
}

impl Character {
    pub fn head(ns: Namespace, c: SnakeClass, out: Option<Port>, inp: Option<Port>) -> Self {
        Character { class: Class::Snake(ns, c), kind: Kind::Head, out_port: out, in_port: inp }
    }

    pub fn body(ns: Namespace, c: SnakeClass, out: Option<Port>, inp: Option<Port>) -> Self {
        Character { class: Class::Snake(ns, c), kind: Kind::Body, out_port: out, in_port: inp }
    }

    pub fn tail(ns: Namespace, c: SnakeClass) -> Self {
        Character { class: Class::Snake(ns, c), kind: Kind::Tail, out_port: None, in_port: None }
    }

    fn token(class: Class, out: Option<Port>, inp: Option<Port>) -> Self {
        Character { class, kind: Kind::Token, out_port: out, in_port: inp }
    }

    pub fn forward(out: Port, inp: Port) -> Self {
        Self::token(Class::Forward, Some(out), Some(inp))
    }

    pub fn back() -> Self {
        Self::token(Class::Back, None, None)
    }

    pub fn dfs(out: Option<Port>, inp: Option<Port>) -> Self {
        Self::token(Class::Dfs, out, inp)
    }

    pub fn kill(ns: Namespace) -> Self {
        Self::token(Class::Kill(ns), None, None)
    }

    pub fn unmark(ns: Namespace) -> Self {
        Self::token(Class::Unmark(ns), None, None)
    }

    pub fn snake_class(&self) -> Option<SnakeClass> {
        self.class.snake().map(|(_, c)| c)
    }

    pub fn is_growing(&self) -> bool {
        self.snake_class().is_some_and(SnakeClass::is_growing)
    }

    pub fn is_tail(&self) -> bool {
        self.kind == Kind::Tail
    }

    /// Port pair carried by a head or body character.
    pub fn ports(&self) -> Option<(Port, Port)> {
        Some((self.out_port?, self.in_port?))
    }

    pub fn with_kind(mut self, kind: Kind) -> Self {
        self.kind = kind;
        self
    }

    /// Fixed-width wire record: class, kind, out-port, in-port (0 = `*`).
    pub fn encode(&self) -> [u8; 4] {
        let kind = match self.kind {
            Kind::Head => 0,
            Kind::Body => 1,
            Kind::Tail => 2,
            Kind::Token => 3,
        };
        [self.class.code(), kind, self.out_port.unwrap_or(0), self.in_port.unwrap_or(0)]
    }

    pub fn decode(b: [u8; 4]) -> Option<Character> {
        let kind = [Kind::Head, Kind::Body, Kind::Tail, Kind::Token].get(b[1] as usize).copied()?;
        let port = |p: u8| (p != 0).then_some(p);
        Some(Character { class: Class::from_code(b[0])?, kind, out_port: port(b[2]), in_port: port(b[3]) })
    }
}

/// Fills a `*` in-port with the port the character arrived on.
pub fn rewrite_star(c: Character, receiving_in_port: Port, delta: usize) -> Result<Character, ConstructError> {
    if receiving_in_port == 0 || receiving_in_port as usize > delta {
        return Err(ConstructError::PortOutOfRange { port: receiving_in_port, delta });
    }
    let carries_ports = match c.kind {
        Kind::Head | Kind::Body => true,
        Kind::Token => c.class == Class::Dfs,
        Kind::Tail => false,
    };
    let mut c = c;
    if carries_ports && c.in_port.is_none() {
        c.in_port = Some(receiving_in_port);
    }
    Ok(c)
}

/// Relabels a snake character into another snake class, keeping kind and ports.
pub fn convert_class(c: Character, to: SnakeClass) -> Result<Character, ConstructError> {
    match c.class {
        Class::Snake(ns, _) => Ok(Character { class: Class::Snake(ns, to), ..c }),
        _ => Err(ConstructError::NotSnake(c)),
    }
}

fn port_str(p: Option<Port>) -> String {
    p.map_or_else(|| "*".to_string(), |p| p.to_string())
}

impl fmt::Display for Character {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pair = format!("({},{})", port_str(self.out_port), port_str(self.in_port));
        match self.class {
            Class::Snake(ns, c) => {
                let prefix = if ns == Namespace::Bca { "B" } else { "" };
                let suffix = match self.kind {
                    Kind::Head => "H",
                    Kind::Tail => return write!(f, "{prefix}{}T", c.tag()),
                    _ => "",
                };
                write!(f, "{prefix}{}{suffix}{pair}", c.tag())
            }
            Class::Dfs => write!(f, "DFS{pair}"),
            Class::Forward => write!(f, "FWD{pair}"),
            Class::Back => write!(f, "BACK"),
            Class::Kill(Namespace::Rca) => write!(f, "KILL"),
            Class::Kill(Namespace::Bca) => write!(f, "BKILL"),
            Class::Unmark(Namespace::Rca) => write!(f, "UNMARK"),
            Class::Unmark(Namespace::Bca) => write!(f, "BUNMARK"),
        }
    }
}

impl FromStr for Character {
    type Err = ConstructError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ConstructError::Parse(s.to_string());
        let (name, pair) = match s.find('(') {
            Some(i) => (&s[..i], Some(&s[i..])),
            None => (s, None),
        };
        let ports = match pair {
            Some(p) => {
                let inner = p.strip_prefix('(').and_then(|p| p.strip_suffix(')')).ok_or_else(err)?;
                let (a, b) = inner.split_once(',').ok_or_else(err)?;
                let parse = |x: &str| -> Result<Option<Port>, ConstructError> {
                    if x == "*" {
                        Ok(None)
                    } else {
                        x.parse::<Port>().map(Some).map_err(|_| err())
                    }
                };
                Some((parse(a)?, parse(b)?))
            }
            None => None,
        };
        let simple = match name {
            "BACK" => Some(Character::back()),
            "KILL" => Some(Character::kill(Namespace::Rca)),
            "BKILL" => Some(Character::kill(Namespace::Bca)),
            "UNMARK" => Some(Character::unmark(Namespace::Rca)),
            "BUNMARK" => Some(Character::unmark(Namespace::Bca)),
            _ => None,
        };
        if let Some(c) = simple {
            return if ports.is_none() { Ok(c) } else { Err(err()) };
        }
        if let (Some((o, i)), "FWD" | "DFS") = (ports, name) {
            let class = if name == "FWD" { Class::Forward } else { Class::Dfs };
            return Ok(Character::token(class, o, i));
        }
        let (ns, rest) = match name.strip_prefix('B') {
            Some(r) if r.len() >= 2 && SnakeClass::ALL.iter().any(|c| r.starts_with(c.tag())) => {
                (Namespace::Bca, r)
            }
            _ => (Namespace::Rca, name),
        };
        let class = SnakeClass::ALL.into_iter().find(|c| rest.starts_with(c.tag())).ok_or_else(err)?;
        let kind = match (&rest[2..], ports) {
            ("H", Some(_)) => Kind::Head,
            ("", Some(_)) => Kind::Body,
            ("T", None) => Kind::Tail,
            _ => return Err(err()),
        };
        let (o, i) = ports.unwrap_or((None, None));
        Ok(Character { class: Class::Snake(ns, class), kind, out_port: o, in_port: i })
    }
}

/// A slot in a [`Frame`]. Each namespace has seven lanes (four snake
/// classes, loop token, KILL, UNMARK); the DFS token has its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lane {
    Snake(Namespace, SnakeClass),
    Loop(Namespace),
    Kill(Namespace),
    Unmark(Namespace),
    Dfs,
}

pub const LANES: usize = 15;

impl Lane {
    pub fn index(self) -> usize {
        match self {
            Lane::Snake(ns, c) => ns.index() * 7 + c.index(),
            Lane::Loop(ns) => ns.index() * 7 + 4,
            Lane::Kill(ns) => ns.index() * 7 + 5,
            Lane::Unmark(ns) => ns.index() * 7 + 6,
            Lane::Dfs => 14,
        }
    }
}

/// Everything that crosses one wire in one tick. An empty slot is the
/// blank character.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Frame {
    slots: [Option<Character>; LANES],
}

/// Two characters were written into one lane of one frame.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed frame: lane {lane:?} already carries {existing}, refused {refused}")]
pub struct FrameConflict {
    pub lane: Lane,
    pub existing: Character,
    pub refused: Character,
}

impl Frame {
    pub const fn blank() -> Self {
        Frame { slots: [None; LANES] }
    }

    pub fn get(&self, lane: Lane) -> Option<Character> {
        self.slots[lane.index()]
    }

    pub fn put(&mut self, lane: Lane, c: Character) -> Result<(), FrameConflict> {
        let slot = &mut self.slots[lane.index()];
        if let Some(existing) = *slot {
            return Err(FrameConflict { lane, existing, refused: c });
        }
        *slot = Some(c);
        Ok(())
    }

    pub fn is_blank(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    pub fn characters(&self) -> impl Iterator<Item = Character> + '_ {
        self.slots.iter().flatten().copied()
    }

    pub fn clear(&mut self) {
        self.slots = [None; LANES];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Namespace::*;
    use SnakeClass::*;

    #[test]
    fn dwell_values() {
        assert_eq!(dwell_ticks(SpeedClass::Speed1), 3);
        assert_eq!(dwell_ticks(SpeedClass::Speed3), 1);
    }

    #[test]
    fn star_rewrite() {
        let h = Character::head(Rca, Ig, Some(2), None);
        assert_eq!(rewrite_star(h, 3, 3).unwrap().to_string(), "IGH(2,3)");
        let b = Character::body(Rca, Ig, Some(1), Some(2));
        assert_eq!(rewrite_star(b, 3, 3).unwrap(), b);
        let t = Character::tail(Rca, Ig);
        assert_eq!(rewrite_star(t, 2, 3).unwrap().to_string(), "IGT");
        assert!(rewrite_star(h, 4, 3).is_err());
        assert!(rewrite_star(h, 0, 3).is_err());
    }

    #[test]
    fn class_conversion() {
        let c = convert_class(Character::body(Rca, Ig, Some(4), Some(1)), Og).unwrap();
        assert_eq!(c.to_string(), "OG(4,1)");
        assert_eq!(convert_class(Character::tail(Rca, Ig), Og).unwrap().to_string(), "OGT");
        let h = convert_class(Character::head(Rca, Og, Some(2), Some(3)), Id).unwrap();
        assert_eq!(h.to_string(), "IDH(2,3)");
        assert!(convert_class(Character::back(), Og).is_err());
    }

    #[test]
    fn display_syntax() {
        assert_eq!(Character::forward(4, 1).to_string(), "FWD(4,1)");
        assert_eq!(Character::dfs(Some(4), Some(1)).to_string(), "DFS(4,1)");
        assert_eq!(Character::back().to_string(), "BACK");
        assert_eq!(Character::kill(Rca).to_string(), "KILL");
        assert_eq!(Character::unmark(Rca).to_string(), "UNMARK");
        assert_eq!(Character::head(Bca, Id, Some(1), None).to_string(), "BIDH(1,*)");
    }

    #[test]
    fn parse_round_trip() {
        for s in ["IGH(2,3)", "IGT", "OG(1,*)", "ODT", "FWD(4,1)", "BACK", "KILL", "UNMARK", "DFS(4,1)", "BIGH(1,2)", "BKILL", "BUNMARK", "BOD(2,2)"] {
            assert_eq!(s.parse::<Character>().unwrap().to_string(), s);
        }
        assert!("IGX(1,2)".parse::<Character>().is_err());
        assert!("IGT(1,2)".parse::<Character>().is_err());
    }

    #[test]
    fn frame_rejects_double_write() {
        let mut f = Frame::default();
        assert!(f.is_blank());
        f.put(Lane::Kill(Rca), Character::kill(Rca)).unwrap();
        assert!(f.put(Lane::Kill(Rca), Character::kill(Rca)).is_err());
        assert!(!f.is_blank());
    }

    #[test]
    fn lane_indices_are_distinct() {
        let mut seen = [false; LANES];
        for ns in Namespace::ALL {
            for c in SnakeClass::ALL {
                seen[Lane::Snake(ns, c).index()] = true;
            }
            seen[Lane::Loop(ns).index()] = true;
            seen[Lane::Kill(ns).index()] = true;
            seen[Lane::Unmark(ns).index()] = true;
        }
        seen[Lane::Dfs.index()] = true;
        assert!(seen.iter().all(|&b| b));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_char() -> impl Strategy<Value = Character> {
            (0u8..15, 0u8..4, 0u8..=8, 0u8..=8)
                .prop_filter_map("valid", |(c, k, o, i)| Character::decode([c, k, o, i]))
        }

        proptest! {
            #[test]
            fn encoding_is_fixed_width_and_lossless(c in any_char()) {
                prop_assert_eq!(c.encode().len(), 4);
                prop_assert_eq!(Character::decode(c.encode()), Some(c));
            }

            #[test]
            fn conversion_round_trip(o in 1u8..=8, i in 1u8..=8, k in 0usize..3, a in 0usize..4, b in 0usize..4) {
                let kind = [Kind::Head, Kind::Body, Kind::Tail][k];
                let c = Character { class: Class::Snake(Rca, SnakeClass::ALL[a]), kind, out_port: Some(o), in_port: Some(i) };
                let back = convert_class(convert_class(c, SnakeClass::ALL[b]).unwrap(), SnakeClass::ALL[a]).unwrap();
                prop_assert_eq!(back, c);
            }
        }
    }
}
