//! The per-processor automaton. Every processor runs the same transition
//! function over a fixed-size state record; only the root flag differs.

use arrayvec::ArrayVec;
use thiserror::Error;

use crate::constructs::{
    convert_class, dwell_ticks, rewrite_star, Character, ConstructError, Frame, FrameConflict, Kind, Lane,
    Namespace, SnakeClass, SpeedClass,
};
use crate::portgraph::{Port, MAX_DELTA};

const SLOW: u8 = 3;
const FAST: u8 = 1;

/// Where a held character goes when its dwell runs out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Every connected out-port; a `*` out-port is filled per port.
    All,
    Port(Port),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Held {
    pub ch: Character,
    pub remaining: u8,
    pub route: Route,
}

/// Outgoing characters of one lane, oldest first. Only the front counts
/// down; two slots cover tail growth (new body, then the tail).
pub type LaneQueue = ArrayVec<Held, 2>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GrowingMark {
    pub visited: bool,
    /// `None` on a visited node means it launched the snakes itself.
    pub parent: Option<Port>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DyingStage {
    #[default]
    Idle,
    /// Head eaten; the next character from the predecessor becomes the head.
    ConvertNext,
    Relay,
}

/// Predecessor in-ports / successor out-ports #1 and #2 of a marked loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoopMarks {
    pub pred: [Option<Port>; 2],
    pub succ: [Option<Port>; 2],
    /// On a doubly-marked node: the next loop token is expected through #2.
    pub alt: bool,
}

impl LoopMarks {
    /// Index of the appropriate predecessor/successor pair, if any is set.
    pub fn appropriate(&self) -> Option<usize> {
        match (self.pred[0].is_some(), self.pred[1].is_some()) {
            (true, true) => Some(self.alt as usize),
            (true, false) => Some(0),
            (false, true) => Some(1),
            (false, false) => None,
        }
    }
}

/// Progress of the caller of one communication call. The backwards call
/// reuses the same register: its self-seeking snake plays the part of the
/// OG snake and its dying snake the part of the ID/OD pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RcaPhase {
    #[default]
    Idle,
    GrowingIG,
    AwaitOG,
    MarkingID,
    AwaitODTail,
    KillAndLoop,
    Unmarking,
}

/// Everything one processor keeps for one namespace of constructs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NsState {
    /// IG, OG visitation.
    pub growing: [GrowingMark; 2],
    /// ID, OD relay progress.
    pub dying: [DyingStage; 2],
    /// Output lanes: IG, OG, ID, OD, loop token, KILL, UNMARK.
    pub lanes: [LaneQueue; 7],
    pub marks: LoopMarks,
    /// Closed to IG (root) and to OG (caller) snakes.
    pub closed: [bool; 2],
    pub phase: RcaPhase,
    pub payload: Option<Character>,
    /// Backwards call: the in-port the self-seeking snake must return on.
    pub await_port: Option<Port>,
    /// Backwards call: this node is the far end of the edge.
    pub target: bool,
}

const LOOP: usize = 4;
const KILL: usize = 5;
const UNMARK: usize = 6;

/// The backwards call sweeps up at speed 1 so its KILL wave has caught
/// every growing snake before the caller finishes.
fn unmark_speed(ns: Namespace) -> SpeedClass {
    match ns {
        Namespace::Rca => SpeedClass::Speed3,
        Namespace::Bca => SpeedClass::Speed1,
    }
}

fn lane_of(ns: Namespace, idx: usize) -> Lane {
    match idx {
        0..=3 => Lane::Snake(ns, SnakeClass::ALL[idx]),
        LOOP => Lane::Loop(ns),
        KILL => Lane::Kill(ns),
        _ => Lane::Unmark(ns),
    }
}

impl NsState {
    pub fn has_growing(&self) -> bool {
        self.growing.iter().any(|g| g.visited) || !self.lanes[0].is_empty() || !self.lanes[1].is_empty()
    }

    fn erase_growing(&mut self) {
        self.growing = Default::default();
        self.lanes[0].clear();
        self.lanes[1].clear();
    }

    pub fn lanes_empty(&self) -> bool {
        self.lanes.iter().all(|l| l.is_empty())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AfterRca {
    #[default]
    Nothing,
    Advance,
    /// Send the token back through this in-port (it arrived as `DFS(out,in)`).
    BcaBack { out: Port, inp: Port },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DfsTask {
    #[default]
    Idle,
    /// Move the token on: next unfinished out-port, else back to the parent.
    Advance,
    Rca { payload: Character, then: AfterRca },
    Bca { in_port: Port, payload: Character },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DfsState {
    pub visited: bool,
    /// `(out_port, in_port)` of the wire the token first arrived on.
    pub parent: Option<(Port, Port)>,
    /// Bit `p` set once out-port `p` is finished.
    pub finished: u16,
    pub has_token: bool,
    pub last_out: Option<Port>,
    pub task: DfsTask,
    /// Ticks to wait before running `task`.
    pub wait: u8,
    pub after: AfterRca,
}

/// The complete state of one processor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeState {
    pub is_root: bool,
    pub quiescent: bool,
    pub ns: [NsState; 2],
    pub dfs: DfsState,
}

/// Static wiring knowledge of one processor (port awareness).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeCtx {
    pub delta: usize,
    /// Bit `p` set iff in-port `p` is wired.
    pub in_ports: u16,
    pub out_ports: u16,
}

impl NodeCtx {
    fn outs(&self) -> impl Iterator<Item = Port> + '_ {
        (1..=self.delta as Port).filter(|&p| self.out_ports & (1 << p) != 0)
    }
}

/// Observable side effects of one transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeEvent {
    /// Root: an IG or ID character passed through conversion.
    PathChar(Character),
    /// Root: a FORWARD/BACK loop token passed through.
    LoopToken(Character),
    /// Root: the root itself reports a DFS move.
    RootEdge(Character),
    Terminated,
    CallStarted(Namespace),
    LoopReleased(Namespace),
    LoopAbsorbed(Namespace),
    CallDone(Namespace),
    PayloadDelivered,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolFault {
    #[error(transparent)]
    Frame(#[from] FrameConflict),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error("lane {0:?} would hold more than two characters")]
    LaneOverflow(Lane),
    #[error("route through unwired out-port {0}")]
    UnwiredPort(Port),
    #[error("DFS token must advance but the node has no parent")]
    Orphan,
}

impl NodeState {
    pub fn new(is_root: bool) -> Self {
        NodeState { is_root, quiescent: true, ..Default::default() }
    }

    /// All snake, token and loop fields at their initial values.
    pub fn protocol_clean(&self) -> bool {
        self.ns.iter().all(|n| *n == NsState::default())
    }

    /// Whether the node must run this tick even with blank inputs.
    pub fn has_pending_work(&self) -> bool {
        self.dfs.task != DfsTask::Idle || self.ns.iter().any(|n| !n.lanes_empty())
    }

    /// Fixed-width serialization; its length depends on nothing but the
    /// field layout.
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(256);
        let port = |p: Option<Port>| p.unwrap_or(0);
        let chr = |c: Option<Character>| c.map_or([0xff; 4], |c| c.encode());
        b.push(self.is_root as u8);
        b.push(self.quiescent as u8);
        for n in &self.ns {
            for g in &n.growing {
                b.extend([g.visited as u8, port(g.parent)]);
            }
            for d in &n.dying {
                b.push(*d as u8);
            }
            for lane in &n.lanes {
                for k in 0..2 {
                    match lane.get(k) {
                        Some(h) => {
                            b.extend(h.ch.encode());
                            b.push(h.remaining);
                            b.push(match h.route {
                                Route::All => 0xff,
                                Route::Port(p) => p,
                            });
                        }
                        None => b.extend([0u8; 6]),
                    }
                }
            }
            b.extend(n.marks.pred.map(port));
            b.extend(n.marks.succ.map(port));
            b.push(n.marks.alt as u8);
            b.extend(n.closed.map(|c| c as u8));
            b.push(n.phase as u8);
            b.extend(chr(n.payload));
            b.push(port(n.await_port));
            b.push(n.target as u8);
        }
        let d = &self.dfs;
        b.push(d.visited as u8);
        b.extend(d.parent.map_or([0, 0], |(o, i)| [o, i]));
        b.extend(d.finished.to_le_bytes());
        b.push(d.has_token as u8);
        b.push(port(d.last_out));
        let (tag, p1, c) = match d.task {
            DfsTask::Idle => (0, 0, None),
            DfsTask::Advance => (1, 0, None),
            DfsTask::Rca { payload, .. } => (2, 0, Some(payload)),
            DfsTask::Bca { in_port, payload } => (3, in_port, Some(payload)),
        };
        b.extend([tag, p1]);
        b.extend(chr(c));
        b.push(d.wait);
        let after = |a: AfterRca| match a {
            AfterRca::Nothing => [0, 0, 0],
            AfterRca::Advance => [1, 0, 0],
            AfterRca::BcaBack { out, inp } => [2, out, inp],
        };
        b.extend(after(d.after));
        let then = match d.task {
            DfsTask::Rca { then, .. } => then,
            _ => AfterRca::Nothing,
        };
        b.extend(after(then));
        b
    }

}

fn push(q: &mut LaneQueue, lane: Lane, ch: Character, remaining: u8, route: Route) -> Result<(), ProtocolFault> {
    q.try_push(Held { ch, remaining, route }).map_err(|_| ProtocolFault::LaneOverflow(lane))
}

/// Applies one tick to `st` in place: reads `inputs` (indexed by in-port
/// minus one, blank where unwired), writes `out` (by out-port minus one).
pub fn step_node(
    st: &mut NodeState,
    ctx: &NodeCtx,
    inputs: &[&Frame],
    out: &mut [Frame],
    ev: &mut Vec<NodeEvent>,
) -> Result<(), ProtocolFault> {
    run_dfs_task(st, ctx, out, ev)?;
    for ns in Namespace::ALL {
        let mut m = Machine { st: &mut *st, ns, ctx, inputs, ev: &mut *ev };
        m.run()?;
    }
    receive_dfs(st, ctx, inputs)?;
    for ns in Namespace::ALL {
        drain(&mut st.ns[ns.index()], ns, ctx, out)?;
    }
    st.quiescent = st.protocol_clean() && st.dfs.task == DfsTask::Idle;
    Ok(())
}

/// Pure form of [`step_node`].
pub fn node_transition(
    state: &NodeState,
    ctx: &NodeCtx,
    inputs: &[Frame],
) -> Result<(NodeState, Vec<Frame>, Vec<NodeEvent>), ProtocolFault> {
    let mut st = state.clone();
    let refs: Vec<&Frame> = inputs.iter().collect();
    let mut out = vec![Frame::default(); ctx.delta];
    let mut ev = Vec::new();
    step_node(&mut st, ctx, &refs, &mut out, &mut ev)?;
    Ok((st, out, ev))
}

fn start_call(n: &mut NsState, ns: Namespace, payload: Character, await_port: Option<Port>) -> Result<(), ProtocolFault> {
    n.phase = RcaPhase::GrowingIG;
    n.payload = Some(payload);
    n.await_port = await_port;
    n.growing[0] = GrowingMark { visited: true, parent: None };
    let lane = Lane::Snake(ns, SnakeClass::Ig);
    push(&mut n.lanes[0], lane, Character::head(ns, SnakeClass::Ig, None, None), FAST, Route::All)?;
    push(&mut n.lanes[0], lane, Character::tail(ns, SnakeClass::Ig), SLOW, Route::All)
}

fn run_dfs_task(st: &mut NodeState, ctx: &NodeCtx, out: &mut [Frame], ev: &mut Vec<NodeEvent>) -> Result<(), ProtocolFault> {
    if st.dfs.task == DfsTask::Idle {
        return Ok(());
    }
    if st.dfs.wait > 0 {
        st.dfs.wait -= 1;
        if st.dfs.wait > 0 {
            return Ok(());
        }
    }
    let mut task = std::mem::take(&mut st.dfs.task);
    if task == DfsTask::Advance {
        let d = &mut st.dfs;
        match ctx.outs().find(|&p| d.finished & (1 << p) == 0) {
            Some(p) => {
                out[p as usize - 1].put(Lane::Dfs, Character::dfs(Some(p), None))?;
                d.last_out = Some(p);
                d.has_token = false;
                return Ok(());
            }
            None if st.is_root => {
                d.has_token = false;
                ev.push(NodeEvent::Terminated);
                return Ok(());
            }
            None => {
                let (o, i) = d.parent.ok_or(ProtocolFault::Orphan)?;
                task = DfsTask::Bca { in_port: i, payload: Character::dfs(Some(o), Some(i)) };
            }
        }
    }
    match task {
        DfsTask::Rca { payload, then } if st.is_root => {
            ev.push(NodeEvent::RootEdge(payload));
            follow_up(&mut st.dfs, then);
        }
        DfsTask::Rca { payload, then } => {
            st.dfs.after = then;
            start_call(&mut st.ns[0], Namespace::Rca, payload, None)?;
            ev.push(NodeEvent::CallStarted(Namespace::Rca));
        }
        DfsTask::Bca { in_port, payload } => {
            st.dfs.has_token = false;
            start_call(&mut st.ns[1], Namespace::Bca, payload, Some(in_port))?;
            ev.push(NodeEvent::CallStarted(Namespace::Bca));
        }
        DfsTask::Idle | DfsTask::Advance => unreachable!(),
    }
    Ok(())
}

fn follow_up(d: &mut DfsState, then: AfterRca) {
    d.task = match then {
        AfterRca::Nothing => DfsTask::Idle,
        AfterRca::Advance => DfsTask::Advance,
        AfterRca::BcaBack { out, inp } => DfsTask::Bca { in_port: inp, payload: Character::dfs(Some(out), Some(inp)) },
    };
    d.wait = 1;
    d.after = AfterRca::Nothing;
}

fn receive_dfs(st: &mut NodeState, ctx: &NodeCtx, inputs: &[&Frame]) -> Result<(), ProtocolFault> {
    for (k, f) in inputs.iter().enumerate() {
        let Some(c) = f.get(Lane::Dfs) else { continue };
        let c = rewrite_star(c, k as Port + 1, ctx.delta)?;
        let (o, i) = (c.out_port.unwrap_or(0), c.in_port.unwrap_or(0));
        let d = &mut st.dfs;
        d.has_token = true;
        let then = if d.visited {
            AfterRca::BcaBack { out: o, inp: i }
        } else {
            d.visited = true;
            d.parent = Some((o, i));
            AfterRca::Advance
        };
        d.task = DfsTask::Rca { payload: Character::forward(o, i), then };
        d.wait = 1;
    }
    Ok(())
}

fn drain(n: &mut NsState, ns: Namespace, ctx: &NodeCtx, out: &mut [Frame]) -> Result<(), ProtocolFault> {
    for idx in 0..7 {
        let Some(front) = n.lanes[idx].first_mut() else { continue };
        front.remaining = front.remaining.saturating_sub(1);
        if front.remaining > 0 {
            continue;
        }
        let h = n.lanes[idx].remove(0);
        let lane = lane_of(ns, idx);
        match h.route {
            Route::All => {
                for p in ctx.outs() {
                    let mut c = h.ch;
                    if matches!(c.kind, Kind::Head | Kind::Body) && c.out_port.is_none() {
                        c.out_port = Some(p);
                    }
                    out[p as usize - 1].put(lane, c)?;
                }
            }
            Route::Port(p) => {
                if ctx.out_ports & (1 << p) == 0 {
                    return Err(ProtocolFault::UnwiredPort(p));
                }
                out[p as usize - 1].put(lane, h.ch)?;
            }
        }
    }
    if n.phase == RcaPhase::GrowingIG && n.lanes[0].is_empty() {
        n.phase = RcaPhase::AwaitOG;
    }
    Ok(())
}

/// One namespace's view of a node during a transition.
struct Machine<'a> {
    st: &'a mut NodeState,
    ns: Namespace,
    ctx: &'a NodeCtx,
    inputs: &'a [&'a Frame],
    ev: &'a mut Vec<NodeEvent>,
}

impl Machine<'_> {
    fn n(&mut self) -> &mut NsState {
        &mut self.st.ns[self.ns.index()]
    }

    fn arrivals(&self, lane: Lane) -> Result<ArrayVec<(Port, Character), MAX_DELTA>, ProtocolFault> {
        let mut v = ArrayVec::new();
        for (k, f) in self.inputs.iter().enumerate() {
            if let Some(c) = f.get(lane) {
                v.push((k as Port + 1, rewrite_star(c, k as Port + 1, self.ctx.delta)?));
            }
        }
        Ok(v)
    }

    fn enqueue(&mut self, idx: usize, ch: Character, speed: SpeedClass, route: Route) -> Result<(), ProtocolFault> {
        let lane = lane_of(self.ns, idx);
        push(&mut self.n().lanes[idx], lane, ch, dwell_ticks(speed), route)
    }

    /// Forwards a growing-snake character, growing a new body before a tail.
    fn relay_growing(&mut self, idx: usize, cls: SnakeClass, c: Character) -> Result<(), ProtocolFault> {
        if c.is_tail() {
            self.enqueue(idx, Character::body(self.ns, cls, None, None), SpeedClass::Speed1, Route::All)?;
        }
        self.enqueue(idx, c, SpeedClass::Speed1, Route::All)
    }

    fn is_rca_root(&self) -> bool {
        self.st.is_root && self.ns == Namespace::Rca
    }

    fn run(&mut self) -> Result<(), ProtocolFault> {
        let killed = self.inputs.iter().any(|f| f.get(Lane::Kill(self.ns)).is_some());
        if killed && self.n().has_growing() {
            self.n().erase_growing();
            self.release_kill()?;
        }
        if !killed {
            self.growing(SnakeClass::Ig)?;
            self.growing(SnakeClass::Og)?;
        }
        self.dying(SnakeClass::Id)?;
        self.dying(SnakeClass::Od)?;
        self.loop_token()?;
        self.unmark()
    }

    fn release_kill(&mut self) -> Result<(), ProtocolFault> {
        if self.n().lanes[KILL].is_empty() {
            self.enqueue(KILL, Character::kill(self.ns), SpeedClass::Speed3, Route::All)?;
        }
        Ok(())
    }

    fn growing(&mut self, cls: SnakeClass) -> Result<(), ProtocolFault> {
        let lane = Lane::Snake(self.ns, cls);
        let arrivals = self.arrivals(lane)?;
        if arrivals.is_empty() {
            return Ok(());
        }
        let phase = self.n().phase;
        let converting = matches!(phase, RcaPhase::AwaitOG | RcaPhase::MarkingID);
        // The caller turns the first returning snake into a dying snake:
        // an OG snake for the root call, its own IG snake for the backwards call.
        let caller_class = match self.ns {
            Namespace::Rca => SnakeClass::Og,
            Namespace::Bca => SnakeClass::Ig,
        };
        if converting && cls == caller_class {
            return self.caller_convert(&arrivals);
        }
        if self.is_rca_root() && cls == SnakeClass::Ig {
            return self.root_convert(&arrivals);
        }
        let idx = cls.index();
        if self.n().closed[idx] {
            return Ok(());
        }
        for (p, c) in arrivals {
            let g = &mut self.n().growing[idx];
            if !g.visited {
                *g = GrowingMark { visited: true, parent: Some(p) };
            } else if g.parent != Some(p) {
                continue;
            }
            self.relay_growing(idx, cls, c)?;
        }
        Ok(())
    }

    fn caller_convert(&mut self, arrivals: &[(Port, Character)]) -> Result<(), ProtocolFault> {
        let ns = self.ns;
        for &(p, c) in arrivals {
            let phase = self.n().phase;
            let on_loop = self.n().marks.pred[0] == Some(p);
            match phase {
                RcaPhase::AwaitOG => {
                    let accept = self.n().await_port.is_none_or(|q| q == p);
                    if !accept || c.kind != Kind::Head {
                        continue;
                    }
                    let n = self.n();
                    n.closed[1] = ns == Namespace::Rca;
                    n.marks.pred[0] = Some(p);
                    n.marks.succ[0] = c.out_port;
                    n.dying[0] = DyingStage::ConvertNext;
                    n.phase = RcaPhase::MarkingID;
                }
                RcaPhase::MarkingID if on_loop => {
                    let succ = self.n().marks.succ[0].expect("set with pred");
                    let mut d = convert_class(c, SnakeClass::Id)?;
                    if c.is_tail() {
                        self.n().phase = RcaPhase::AwaitODTail;
                        self.n().dying[0] = DyingStage::Idle;
                    } else if self.n().dying[0] == DyingStage::ConvertNext {
                        d.kind = Kind::Head;
                        self.n().dying[0] = DyingStage::Relay;
                    }
                    self.enqueue(SnakeClass::Id.index(), d, SpeedClass::Speed1, Route::Port(succ))?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn root_convert(&mut self, arrivals: &[(Port, Character)]) -> Result<(), ProtocolFault> {
        for &(p, c) in arrivals {
            let n = self.n();
            if !n.closed[0] {
                n.closed[0] = true;
                n.growing[0] = GrowingMark { visited: true, parent: Some(p) };
                n.growing[1] = GrowingMark { visited: true, parent: None };
            } else if n.growing[0].parent != Some(p) {
                continue;
            }
            self.ev.push(NodeEvent::PathChar(c));
            let og = convert_class(c, SnakeClass::Og)?;
            self.relay_growing(SnakeClass::Og.index(), SnakeClass::Og, og)?;
        }
        Ok(())
    }

    fn dying(&mut self, cls: SnakeClass) -> Result<(), ProtocolFault> {
        let arrivals = self.arrivals(Lane::Snake(self.ns, cls))?;
        let k = cls.index() - 2;
        let ns = self.ns;
        // the caller's loop closes when the final dying tail comes home
        let final_class = if ns == Namespace::Rca { SnakeClass::Od } else { SnakeClass::Id };
        let root = self.is_rca_root() && cls == SnakeClass::Id;
        for (p, c) in arrivals {
            let n = self.n();
            if n.phase == RcaPhase::AwaitODTail && cls == final_class {
                if c.is_tail() && n.marks.pred[0] == Some(p) {
                    self.release_loop()?;
                }
                continue;
            }
            // at the root, ID characters leave as OD through successor #2
            let (out_idx, succ_k) = if root { (SnakeClass::Od.index(), 1) } else { (cls.index(), k) };
            let n = self.n();
            match n.dying[k] {
                DyingStage::Idle => {
                    if c.kind == Kind::Head {
                        n.marks.pred[k] = Some(p);
                        n.marks.succ[succ_k] = c.out_port;
                        n.dying[k] = DyingStage::ConvertNext;
                        if root {
                            self.ev.push(NodeEvent::PathChar(c));
                        }
                    }
                }
                stage if n.marks.pred[k] == Some(p) => {
                    let succ = n.marks.succ[succ_k].expect("set with pred");
                    let mut d = c;
                    if c.is_tail() {
                        n.dying[k] = DyingStage::Idle;
                        if ns == Namespace::Bca && k == 0 && stage == DyingStage::ConvertNext {
                            n.target = true;
                        }
                    } else if stage == DyingStage::ConvertNext {
                        d.kind = Kind::Head;
                        n.dying[k] = DyingStage::Relay;
                    }
                    if root {
                        self.ev.push(NodeEvent::PathChar(c));
                        d = convert_class(d, SnakeClass::Od)?;
                    }
                    self.enqueue(out_idx, d, SpeedClass::Speed1, Route::Port(succ))?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Caller: dying tail is home. Flood KILL and send the payload round the loop.
    fn release_loop(&mut self) -> Result<(), ProtocolFault> {
        let n = self.n();
        n.erase_growing();
        n.phase = RcaPhase::KillAndLoop;
        let payload = n.payload.expect("caller holds a payload");
        let succ = n.marks.succ[0].expect("caller is marked");
        self.release_kill()?;
        self.enqueue(LOOP, payload, SpeedClass::Speed1, Route::Port(succ))?;
        self.ev.push(NodeEvent::LoopReleased(self.ns));
        Ok(())
    }

    fn loop_token(&mut self) -> Result<(), ProtocolFault> {
        let is_root = self.is_rca_root();
        for (p, c) in self.arrivals(Lane::Loop(self.ns))? {
            let n = self.n();
            if n.phase == RcaPhase::KillAndLoop {
                if n.marks.pred[0] == Some(p) {
                    let succ = n.marks.succ[0].expect("caller is marked");
                    n.phase = RcaPhase::Unmarking;
                    self.ev.push(NodeEvent::LoopAbsorbed(self.ns));
                    self.enqueue(UNMARK, Character::unmark(self.ns), unmark_speed(self.ns), Route::Port(succ))?;
                }
                continue;
            }
            if is_root {
                if n.marks.pred[0] == Some(p) {
                    let succ = n.marks.succ[1].expect("root loop exit");
                    self.ev.push(NodeEvent::LoopToken(c));
                    self.enqueue(LOOP, c, SpeedClass::Speed1, Route::Port(succ))?;
                }
                continue;
            }
            let Some(e) = n.marks.appropriate() else { continue };
            if n.marks.pred[e] != Some(p) {
                continue;
            }
            let succ = n.marks.succ[e].expect("set with pred");
            if n.marks.pred[0].is_some() && n.marks.pred[1].is_some() {
                n.marks.alt = !n.marks.alt;
            }
            if n.target {
                let d = &mut self.st.dfs;
                d.has_token = true;
                d.finished |= 1 << succ;
                self.ev.push(NodeEvent::PayloadDelivered);
            }
            self.enqueue(LOOP, c, SpeedClass::Speed1, Route::Port(succ))?;
        }
        Ok(())
    }

    fn unmark(&mut self) -> Result<(), ProtocolFault> {
        let is_root = self.is_rca_root();
        for (p, c) in self.arrivals(Lane::Unmark(self.ns))? {
            let n = self.n();
            if n.phase == RcaPhase::Unmarking {
                if n.marks.pred[0] == Some(p) {
                    let keep_lanes = n.lanes.clone();
                    *n = NsState { lanes: keep_lanes, ..Default::default() };
                    self.ev.push(NodeEvent::CallDone(self.ns));
                    if self.ns == Namespace::Rca {
                        let then = self.st.dfs.after;
                        follow_up(&mut self.st.dfs, then);
                    }
                }
                continue;
            }
            if is_root {
                if n.marks.pred[0] == Some(p) {
                    let succ = n.marks.succ[1].expect("root loop exit");
                    n.marks.pred[0] = None;
                    n.marks.succ[1] = None;
                    n.closed[0] = false;
                    self.enqueue(UNMARK, c, unmark_speed(self.ns), Route::Port(succ))?;
                }
                continue;
            }
            let Some(e) = n.marks.appropriate() else { continue };
            if n.marks.pred[e] != Some(p) {
                continue;
            }
            let succ = n.marks.succ[e].expect("set with pred");
            n.marks.pred[e] = None;
            n.marks.succ[e] = None;
            n.marks.alt = false;
            if n.target {
                n.target = false;
                // start only once the unmark has reached the caller and it has finished
                self.st.dfs.task = DfsTask::Rca { payload: Character::back(), then: AfterRca::Advance };
                self.st.dfs.wait = dwell_ticks(unmark_speed(self.ns)) + 1;
            }
            self.enqueue(UNMARK, c, unmark_speed(self.ns), Route::Port(succ))?;
        }
        Ok(())
    }
}
