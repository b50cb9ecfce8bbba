//! Depth-tracking and symbolic execution of EVM bytecode.
//!
//! Two analyses live here. `simulate_depth` walks a single basic block and
//! tracks only the stack height, which is enough to prove that a block must
//! underflow or overflow the 1,024-slot stack. `sym_exec` runs a bounded
//! symbolic machine over whole bytecodes to extract the concrete addresses a
//! contract can reach through the call-family opcodes, forking at every JUMPI
//! and folding arithmetic over concrete operands.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::isa::{self, op, BasicBlock, Fork, Instruction};
use crate::types::{Address, U256, U512};

/// EVM stack slot limit.
pub const STACK_LIMIT: usize = 1024;

/// A jump target may be re-entered at most twice per path, bounding loops.
const MAX_OFFSET_VISITS: u8 = 3;

/// A machine word: either a known 256-bit value or an opaque value tagged
/// with its origin, e.g. `CALLDATALOAD@12`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Word {
    Concrete(U256),
    Symbolic(String),
}

impl Word {
    pub fn concrete(&self) -> Option<&U256> {
        match self {
            Word::Concrete(v) => Some(v),
            Word::Symbolic(_) => None,
        }
    }
}

/// Execution state of one explored path.
#[derive(Clone, Debug)]
pub struct SymbolicState {
    /// Machine stack, bottom first; use `peek` for top-relative access.
    stack: Vec<Word>,
    pc: usize,
    steps: u64,
    path_id: u32,
    visits: HashMap<usize, u8>,
}

impl SymbolicState {
    fn new(path_id: u32) -> Self {
        SymbolicState {
            stack: Vec::new(),
            pc: 0,
            steps: 0,
            path_id,
            visits: HashMap::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    /// Stack item `n` positions below the top (0 = top, 1 = the call-target slot).
    pub fn peek(&self, n: usize) -> Option<&Word> {
        let len = self.stack.len();
        if n < len {
            Some(&self.stack[len - 1 - n])
        } else {
            None
        }
    }

    /// Stack contents bottom first.
    pub fn stack(&self) -> &[Word] {
        &self.stack
    }

    pub fn pc(&self) -> usize {
        self.pc
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn path_id(&self) -> u32 {
        self.path_id
    }
}

/// Verdict of a straight-line stack-depth simulation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DepthOutcome {
    Ok { final_depth: usize },
    Underflow { at_offset: usize },
    Overflow { at_offset: usize },
}

/// The four opcodes through which contracts interact.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum CallOpcode {
    Call,
    CallCode,
    DelegateCall,
    StaticCall,
}

impl CallOpcode {
    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            op::CALL => Some(CallOpcode::Call),
            op::CALLCODE => Some(CallOpcode::CallCode),
            op::DELEGATECALL => Some(CallOpcode::DelegateCall),
            op::STATICCALL => Some(CallOpcode::StaticCall),
            _ => None,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            CallOpcode::Call => "CALL",
            CallOpcode::CallCode => "CALLCODE",
            CallOpcode::DelegateCall => "DELEGATECALL",
            CallOpcode::StaticCall => "STATICCALL",
        }
    }

    fn arity(&self) -> usize {
        match self {
            CallOpcode::Call | CallOpcode::CallCode => 7,
            CallOpcode::DelegateCall | CallOpcode::StaticCall => 6,
        }
    }
}

/// Target of an observed call: a concrete 160-bit address or unresolved.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum CallTarget {
    Concrete(Address),
    Symbolic,
}

/// One call-family opcode reached during exploration.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct CallEvent {
    pub call_opcode: CallOpcode,
    pub target: CallTarget,
    pub at_offset: usize,
    pub path_id: u32,
}

/// Opcodes that probe another account by address without calling it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum ProbeOpcode {
    Balance,
    ExtCodeSize,
    ExtCodeCopy,
}

impl ProbeOpcode {
    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            op::BALANCE => Some(ProbeOpcode::Balance),
            op::EXTCODESIZE => Some(ProbeOpcode::ExtCodeSize),
            op::EXTCODECOPY => Some(ProbeOpcode::ExtCodeCopy),
            _ => None,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            ProbeOpcode::Balance => "BALANCE",
            ProbeOpcode::ExtCodeSize => "EXTCODESIZE",
            ProbeOpcode::ExtCodeCopy => "EXTCODECOPY",
        }
    }
}

/// An account-probing opcode seen with a concrete address operand.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ProbeEvent {
    pub opcode: ProbeOpcode,
    pub target: Address,
    pub at_offset: usize,
}

/// Exploration limits for one `sym_exec` invocation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecBudget {
    pub max_paths: u32,
    pub max_steps_per_path: u64,
    #[serde(with = "duration_millis")]
    pub time_limit: Duration,
}

impl Default for ExecBudget {
    fn default() -> Self {
        ExecBudget {
            max_paths: 256,
            max_steps_per_path: 4096,
            time_limit: Duration::from_secs(5),
        }
    }
}

mod duration_millis {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, ser: S) -> Result<S::Ok, S::Error> {
        (d.as_millis() as u64).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(de)?))
    }
}

/// Everything observed across the explored paths of one bytecode.
#[derive(Clone, Debug, Default)]
pub struct SymExecOutcome {
    /// Call events deduplicated by (opcode, target, offset).
    pub calls: Vec<CallEvent>,
    /// Probe events deduplicated by (opcode, target, offset).
    pub probes: Vec<ProbeEvent>,
    /// False when any budget (paths, steps, wall clock, loop bound) cut
    /// exploration short; partial events are still returned.
    pub terminated_normally: bool,
    pub paths_explored: u32,
    pub total_steps: u64,
    /// Final machine state of each fully-halted path, in exploration order.
    pub final_states: Vec<SymbolicState>,
}

/// Simulates stack depth through one straight-line block, starting from an
/// empty stack. Depth effects depend only on opcode arity; unknown opcodes
/// contribute nothing and are left for the opcode-error detector to flag.
pub fn simulate_depth(block: &BasicBlock) -> DepthOutcome {
    let mut depth = 0usize;
    for ins in &block.instructions {
        if !ins.info.is_known {
            continue;
        }
        let pops = ins.info.pops as usize;
        let pushes = ins.info.pushes as usize;
        if pops > depth {
            return DepthOutcome::Underflow {
                at_offset: ins.offset,
            };
        }
        if depth - pops + pushes > STACK_LIMIT {
            return DepthOutcome::Overflow {
                at_offset: ins.offset,
            };
        }
        depth = depth - pops + pushes;
    }
    DepthOutcome::Ok { final_depth: depth }
}

/// True iff the decoded code contains any of the four call-family opcodes as
/// an instruction (bytes inside PUSH immediates do not count).
pub fn contains_call_opcode_at(code: &[u8], fork: Fork) -> bool {
    isa::decode_at(code, fork)
        .iter()
        .any(|i| CallOpcode::from_byte(i.opcode()).is_some())
}

/// `contains_call_opcode_at` under the default fork.
pub fn contains_call_opcode(code: &[u8]) -> bool {
    contains_call_opcode_at(code, Fork::default())
}

// 256-bit wrapping arithmetic used for constant folding.

fn fold_signed_split(v: U256) -> (bool, U256) {
    // Two's complement: returns (negative, magnitude).
    if v.bit(255) {
        (true, (!v).overflowing_add(U256::one()).0)
    } else {
        (false, v)
    }
}

fn fold_from_signed(negative: bool, magnitude: U256) -> U256 {
    if negative {
        (!magnitude).overflowing_add(U256::one()).0
    } else {
        magnitude
    }
}

fn fold_sdiv(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::zero();
    }
    let (na, ma) = fold_signed_split(a);
    let (nb, mb) = fold_signed_split(b);
    fold_from_signed(na ^ nb, ma / mb)
}

fn fold_smod(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::zero();
    }
    let (na, ma) = fold_signed_split(a);
    let (_, mb) = fold_signed_split(b);
    fold_from_signed(na, ma % mb)
}

fn fold_signextend(index: U256, value: U256) -> U256 {
    if index >= U256::from(31u64) {
        return value;
    }
    let i = index.as_u64() as usize;
    let sign_bit = 8 * i + 7;
    let mask = (U256::one() << (sign_bit + 1)) - U256::one();
    if value.bit(sign_bit) {
        value | !mask
    } else {
        value & mask
    }
}

fn fold_byte(index: U256, value: U256) -> U256 {
    if index >= U256::from(32u64) {
        return U256::zero();
    }
    let i = index.as_u64() as usize;
    (value >> (8 * (31 - i))) & U256::from(0xffu64)
}

fn fold_sar(shift: U256, value: U256) -> U256 {
    let negative = value.bit(255);
    if shift >= U256::from(256u64) {
        return if negative {
            !U256::zero()
        } else {
            U256::zero()
        };
    }
    let s = shift.as_u64() as usize;
    if s == 0 {
        return value;
    }
    let shifted = value >> s;
    if negative {
        shifted | (!U256::zero() << (256 - s))
    } else {
        shifted
    }
}

fn bool_word(b: bool) -> U256 {
    if b {
        U256::one()
    } else {
        U256::zero()
    }
}

/// Folds an opcode over fully-concrete operands (top of stack first) with
/// wrapping 256-bit semantics. Returns None for opcodes that are not folded.
fn fold(opcode: u8, args: &[U256]) -> Option<U256> {
    let v = match opcode {
        op::ADD => args[0].overflowing_add(args[1]).0,
        op::MUL => args[0].overflowing_mul(args[1]).0,
        op::SUB => args[0].overflowing_sub(args[1]).0,
        op::DIV => {
            if args[1].is_zero() {
                U256::zero()
            } else {
                args[0] / args[1]
            }
        }
        op::SDIV => fold_sdiv(args[0], args[1]),
        op::MOD => {
            if args[1].is_zero() {
                U256::zero()
            } else {
                args[0] % args[1]
            }
        }
        op::SMOD => fold_smod(args[0], args[1]),
        op::ADDMOD => {
            if args[2].is_zero() {
                U256::zero()
            } else {
                let wide = U512::from(args[0]) + U512::from(args[1]);
                U256::try_from(wide % U512::from(args[2])).expect("mod < 2^256")
            }
        }
        op::MULMOD => {
            if args[2].is_zero() {
                U256::zero()
            } else {
                let wide = U512::from(args[0]) * U512::from(args[1]);
                U256::try_from(wide % U512::from(args[2])).expect("mod < 2^256")
            }
        }
        op::EXP => args[0].overflowing_pow(args[1]).0,
        op::SIGNEXTEND => fold_signextend(args[0], args[1]),
        op::LT => bool_word(args[0] < args[1]),
        op::GT => bool_word(args[0] > args[1]),
        op::SLT => {
            let (na, ma) = fold_signed_split(args[0]);
            let (nb, mb) = fold_signed_split(args[1]);
            bool_word(match (na, nb) {
                (true, false) => true,
                (false, true) => false,
                (false, false) => ma < mb,
                (true, true) => ma > mb,
            })
        }
        op::SGT => {
            let (na, ma) = fold_signed_split(args[0]);
            let (nb, mb) = fold_signed_split(args[1]);
            bool_word(match (na, nb) {
                (true, false) => false,
                (false, true) => true,
                (false, false) => ma > mb,
                (true, true) => ma < mb,
            })
        }
        op::EQ => bool_word(args[0] == args[1]),
        op::ISZERO => bool_word(args[0].is_zero()),
        op::AND => args[0] & args[1],
        op::OR => args[0] | args[1],
        op::XOR => args[0] ^ args[1],
        op::NOT => !args[0],
        op::BYTE => fold_byte(args[0], args[1]),
        op::SHL => {
            if args[0] >= U256::from(256u64) {
                U256::zero()
            } else {
                args[1] << args[0].as_u64() as usize
            }
        }
        op::SHR => {
            if args[0] >= U256::from(256u64) {
                U256::zero()
            } else {
                args[1] >> args[0].as_u64() as usize
            }
        }
        op::SAR => fold_sar(args[0], args[1]),
        _ => return None,
    };
    Some(v)
}

fn is_foldable(opcode: u8) -> bool {
    matches!(opcode,
        op::ADD..=op::SIGNEXTEND | op::LT..=op::SAR)
}

struct Engine<'a> {
    instrs: Vec<Instruction>,
    code_len: usize,
    by_offset: HashMap<usize, usize>,
    jumpdests: HashSet<usize>,
    budget: &'a ExecBudget,
    started: Instant,
    /// Keyed by (opcode, target, offset) so repeats on later paths collapse;
    /// the value remembers the first path that reached the site.
    calls: std::collections::BTreeMap<(CallOpcode, CallTarget, usize), u32>,
    probes: BTreeSet<(ProbeOpcode, Address, usize)>,
    truncated: bool,
    paths_started: u32,
    total_steps: u64,
    pending: Vec<SymbolicState>,
    finished: Vec<SymbolicState>,
}

enum StepResult {
    Continue,
    Halt,
    /// Path cut by a budget or loop bound, not by the program itself.
    Truncate,
}

impl<'a> Engine<'a> {
    fn new(code: &[u8], fork: Fork, budget: &'a ExecBudget) -> Self {
        let instrs = isa::decode_at(code, fork);
        let by_offset = instrs
            .iter()
            .enumerate()
            .map(|(i, ins)| (ins.offset, i))
            .collect();
        let jumpdests = instrs
            .iter()
            .filter(|i| i.info.is_known && i.opcode() == op::JUMPDEST)
            .map(|i| i.offset)
            .collect();
        Engine {
            instrs,
            code_len: code.len(),
            by_offset,
            jumpdests,
            budget,
            started: Instant::now(),
            calls: std::collections::BTreeMap::new(),
            probes: BTreeSet::new(),
            truncated: false,
            paths_started: 0,
            total_steps: 0,
            pending: Vec::new(),
            finished: Vec::new(),
        }
    }

    fn spawn(&mut self, state: SymbolicState) {
        if self.paths_started < self.budget.max_paths {
            self.paths_started += 1;
            self.pending.push(state);
        } else {
            self.truncated = true;
        }
    }

    fn run(&mut self) {
        self.spawn(SymbolicState::new(0));
        while let Some(mut state) = self.pending.pop() {
            loop {
                if self.started.elapsed() > self.budget.time_limit {
                    self.truncated = true;
                    self.pending.clear();
                    return;
                }
                match self.step(&mut state) {
                    StepResult::Continue => {}
                    StepResult::Halt => {
                        self.finished.push(state);
                        break;
                    }
                    StepResult::Truncate => {
                        self.truncated = true;
                        break;
                    }
                }
            }
        }
    }

    fn step(&mut self, state: &mut SymbolicState) -> StepResult {
        let Some(&idx) = self.by_offset.get(&state.pc) else {
            // Ran off the end of code: implicit STOP.
            return StepResult::Halt;
        };
        if state.steps >= self.budget.max_steps_per_path {
            return StepResult::Truncate;
        }
        state.steps += 1;
        self.total_steps += 1;

        let visits = state.visits.entry(state.pc).or_insert(0);
        *visits += 1;
        if *visits > MAX_OFFSET_VISITS {
            return StepResult::Truncate;
        }

        let ins = self.instrs[idx].clone();
        let info = ins.info;
        let offset = ins.offset;

        if !info.is_known {
            // Bad instruction: the EVM faults here.
            return StepResult::Halt;
        }

        // Underflow/overflow checks shared by every opcode.
        let pops = info.pops as usize;
        let pushes = info.pushes as usize;
        if pops > state.stack.len() || state.stack.len() - pops + pushes > STACK_LIMIT {
            return StepResult::Halt;
        }

        let byte = info.byte_value;
        match byte {
            op::STOP | op::RETURN | op::REVERT | op::SELFDESTRUCT => {
                for _ in 0..pops {
                    state.stack.pop();
                }
                return StepResult::Halt;
            }
            op::JUMP => {
                let target = state.stack.pop().expect("checked arity");
                return match target {
                    Word::Concrete(t) => self.jump_to(state, &t),
                    Word::Symbolic(_) => StepResult::Halt,
                };
            }
            op::JUMPI => {
                let target = state.stack.pop().expect("checked arity");
                state.stack.pop();
                // Over-approximate: no constraint solving, take both branches.
                if let Word::Concrete(t) = target {
                    if let Some(dest) = self.valid_jumpdest(&t) {
                        let mut forked = state.clone();
                        forked.pc = dest;
                        forked.path_id = self.paths_started;
                        self.spawn(forked);
                    }
                }
                state.pc = ins.next_offset();
                return StepResult::Continue;
            }
            op::JUMPDEST => {}
            _ if CallOpcode::from_byte(byte).is_some() => {
                let call = CallOpcode::from_byte(byte).expect("matched");
                debug_assert_eq!(call.arity(), pops);
                let target = match state.peek(1) {
                    Some(Word::Concrete(v)) => CallTarget::Concrete(Address::from_word(v)),
                    _ => CallTarget::Symbolic,
                };
                self.calls
                    .entry((call, target, offset))
                    .or_insert(state.path_id);
                for _ in 0..pops {
                    state.stack.pop();
                }
                // The callee is not entered; its success flag is unknown.
                state
                    .stack
                    .push(Word::Symbolic(format!("{}@{offset}", call.mnemonic())));
            }
            _ if ProbeOpcode::from_byte(byte).is_some() => {
                let probe = ProbeOpcode::from_byte(byte).expect("matched");
                if let Some(Word::Concrete(v)) = state.peek(0) {
                    self.probes.insert((probe, Address::from_word(v), offset));
                }
                for _ in 0..pops {
                    state.stack.pop();
                }
                if pushes > 0 {
                    state
                        .stack
                        .push(Word::Symbolic(format!("{}@{offset}", probe.mnemonic())));
                }
            }
            _ if (op::PUSH1..=op::PUSH32).contains(&byte) || byte == op::PUSH0 => {
                let value = ins.push_value().unwrap_or_default();
                state.stack.push(Word::Concrete(value));
            }
            _ if (op::DUP1..=op::DUP16).contains(&byte) => {
                let n = (byte - op::DUP1) as usize;
                let dup = state.peek(n).expect("checked arity").clone();
                state.stack.push(dup);
            }
            _ if (op::SWAP1..=op::SWAP16).contains(&byte) => {
                let n = (byte - op::SWAP1) as usize + 1;
                let top = state.stack.len() - 1;
                state.stack.swap(top, top - n);
            }
            op::POP => {
                state.stack.pop();
            }
            op::PC => {
                state.stack.push(Word::Concrete(U256::from(offset)));
            }
            op::CODESIZE => {
                state.stack.push(Word::Concrete(U256::from(self.code_len)));
            }
            _ if is_foldable(byte) => {
                let args: Vec<Word> = (0..pops)
                    .map(|_| state.stack.pop().expect("checked arity"))
                    .collect();
                let concrete: Option<Vec<U256>> =
                    args.iter().map(|w| w.concrete().copied()).collect();
                let result = match concrete {
                    Some(values) => match fold(byte, &values) {
                        Some(v) => Word::Concrete(v),
                        None => Word::Symbolic(format!("{}@{offset}", info.mnemonic)),
                    },
                    None => Word::Symbolic(format!("{}@{offset}", info.mnemonic)),
                };
                state.stack.push(result);
            }
            _ => {
                // Environment reads, memory, storage, logs, CREATE: operands are
                // consumed and any produced value is opaque.
                for _ in 0..pops {
                    state.stack.pop();
                }
                for _ in 0..pushes {
                    state
                        .stack
                        .push(Word::Symbolic(format!("{}@{offset}", info.mnemonic)));
                }
            }
        }

        state.pc = ins.next_offset();
        StepResult::Continue
    }

    fn valid_jumpdest(&self, target: &U256) -> Option<usize> {
        if *target > U256::from(usize::MAX as u64) {
            return None;
        }
        let dest = target.as_u64() as usize;
        self.jumpdests.contains(&dest).then_some(dest)
    }

    fn jump_to(&self, state: &mut SymbolicState, target: &U256) -> StepResult {
        match self.valid_jumpdest(target) {
            Some(dest) => {
                state.pc = dest;
                StepResult::Continue
            }
            None => StepResult::Halt,
        }
    }
}

/// Explores `code` with a symbolic machine under `budget`, collecting the
/// call and probe targets reachable from the entry point.
pub fn sym_exec_at(code: &[u8], budget: &ExecBudget, fork: Fork) -> SymExecOutcome {
    let mut engine = Engine::new(code, fork, budget);
    engine.run();
    SymExecOutcome {
        calls: engine
            .calls
            .iter()
            .map(|((call_opcode, target, at_offset), path_id)| CallEvent {
                call_opcode: *call_opcode,
                target: *target,
                at_offset: *at_offset,
                path_id: *path_id,
            })
            .collect(),
        probes: engine
            .probes
            .iter()
            .map(|(opcode, target, at_offset)| ProbeEvent {
                opcode: *opcode,
                target: *target,
                at_offset: *at_offset,
            })
            .collect(),
        terminated_normally: !engine.truncated,
        paths_explored: engine.paths_started,
        total_steps: engine.total_steps,
        final_states: engine.finished,
    }
}

/// `sym_exec_at` under the default fork.
pub fn sym_exec(code: &[u8], budget: &ExecBudget) -> SymExecOutcome {
    sym_exec_at(code, budget, Fork::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::first_block;

    fn block(code: &[u8]) -> BasicBlock {
        first_block(code).expect("non-empty code")
    }

    #[test]
    fn div_on_empty_stack_underflows() {
        assert_eq!(
            simulate_depth(&block(&[op::DIV])),
            DepthOutcome::Underflow { at_offset: 0 }
        );
    }

    #[test]
    fn push_push_add_ends_at_depth_one() {
        let b = block(&[op::PUSH1, 1, op::PUSH1, 2, op::ADD]);
        assert_eq!(simulate_depth(&b), DepthOutcome::Ok { final_depth: 1 });
    }

    #[test]
    fn overflow_at_the_1025th_push() {
        let mut code = Vec::new();
        for _ in 0..1025 {
            code.extend_from_slice(&[op::PUSH1, 0]);
        }
        let b = block(&code);
        assert_eq!(
            simulate_depth(&b),
            DepthOutcome::Overflow {
                at_offset: 1024 * 2
            }
        );
    }

    #[test]
    fn unknown_opcodes_do_not_affect_depth() {
        let b = block(&[0xd9, 0x29]);
        assert_eq!(simulate_depth(&b), DepthOutcome::Ok { final_depth: 0 });
    }

    #[test]
    fn underflow_offset_is_first_offender() {
        // PUSH1 1, ADD pops 2 at depth 1 -> underflow at offset 2.
        let b = block(&[op::PUSH1, 1, op::ADD, op::STOP]);
        assert_eq!(simulate_depth(&b), DepthOutcome::Underflow { at_offset: 2 });
    }

    #[test]
    fn call_opcode_scan_ignores_immediates() {
        assert!(contains_call_opcode(&[op::CALL]));
        // PUSH20 immediate containing 0xF1 is data, not an instruction.
        let mut code = vec![op::PUSH20];
        code.extend_from_slice(&[0xf1; 20]);
        code.push(op::STOP);
        assert!(!contains_call_opcode(&code));
        assert!(!contains_call_opcode(&[]));
    }

    fn delegate_stub(target: [u8; 20]) -> Vec<u8> {
        let mut code = Vec::new();
        for _ in 0..4 {
            code.extend_from_slice(&[op::PUSH1, 0]);
        }
        code.push(op::PUSH20);
        code.extend_from_slice(&target);
        code.extend_from_slice(&[0x61, 0xff, 0xff]); // PUSH2 gas
        code.push(op::DELEGATECALL);
        code.push(op::STOP);
        code
    }

    #[test]
    fn delegatecall_to_pushed_address_is_reported() {
        let target = [0xab; 20];
        let outcome = sym_exec(&delegate_stub(target), &ExecBudget::default());
        assert!(outcome.terminated_normally);
        assert_eq!(outcome.calls.len(), 1);
        let ev = &outcome.calls[0];
        assert_eq!(ev.call_opcode, CallOpcode::DelegateCall);
        assert_eq!(ev.target, CallTarget::Concrete(Address(target)));
    }

    #[test]
    fn call_target_truncated_to_160_bits() {
        // PUSH32 with 12 junk bytes above the address; CALL sees the low 160 bits.
        let mut code = Vec::new();
        for _ in 0..5 {
            code.extend_from_slice(&[op::PUSH1, 0]);
        }
        code.push(op::PUSH32);
        code.extend_from_slice(&[0xee; 12]);
        code.extend_from_slice(&[0xcd; 20]);
        code.extend_from_slice(&[op::PUSH1, 0x7f, op::CALL, op::STOP]);
        let outcome = sym_exec(&code, &ExecBudget::default());
        assert_eq!(outcome.calls.len(), 1);
        assert_eq!(
            outcome.calls[0].target,
            CallTarget::Concrete(Address([0xcd; 20]))
        );
    }

    #[test]
    fn no_call_bytes_no_events() {
        let outcome = sym_exec(
            &[op::PUSH1, 1, op::PUSH1, 2, op::ADD, op::STOP],
            &ExecBudget::default(),
        );
        assert!(outcome.calls.is_empty());
        assert!(outcome.terminated_normally);
        assert_eq!(outcome.final_states.len(), 1);
        assert_eq!(
            outcome.final_states[0].stack(),
            &[Word::Concrete(U256::from(3u64))]
        );
    }

    #[test]
    fn jumpi_forks_both_branches() {
        // Bytecode with a symbolic condition: one branch DELEGATECALLs A, the
        // other STOPs at a JUMPDEST.
        let target = [0x11; 20];
        let mut code = vec![op::PUSH1, 0, op::CALLDATALOAD, op::ISZERO];
        let stub = delegate_stub(target);
        let dest = (code.len() + 2 + 1 + stub.len()) as u8;
        code.extend_from_slice(&[op::PUSH1, dest, op::JUMPI]);
        code.extend_from_slice(&stub);
        code.extend_from_slice(&[op::JUMPDEST, op::STOP]);
        let outcome = sym_exec(&code, &ExecBudget::default());
        assert_eq!(outcome.paths_explored, 2);
        assert_eq!(outcome.calls.len(), 1);
        assert_eq!(
            outcome.calls[0].target,
            CallTarget::Concrete(Address(target))
        );
        assert!(outcome.terminated_normally);
    }

    #[test]
    fn jump_to_non_jumpdest_halts_path() {
        // PUSH1 3, JUMP -> offset 3 is not a JUMPDEST.
        let outcome = sym_exec(&[op::PUSH1, 3, op::JUMP, op::CALL], &ExecBudget::default());
        assert!(outcome.calls.is_empty());
        assert!(outcome.terminated_normally);
    }

    #[test]
    fn symbolic_jump_halts_path() {
        let outcome = sym_exec(
            &[op::PUSH1, 0, op::CALLDATALOAD, op::JUMP, 0x5b, op::STOP],
            &ExecBudget::default(),
        );
        assert!(outcome.terminated_normally);
        assert_eq!(outcome.paths_explored, 1);
    }

    #[test]
    fn loops_are_cut_by_the_revisit_bound() {
        // JUMPDEST; PUSH1 0; JUMP -> infinite loop back to offset 0.
        let outcome = sym_exec(
            &[op::JUMPDEST, op::PUSH1, 0, op::JUMP],
            &ExecBudget::default(),
        );
        assert!(!outcome.terminated_normally);
    }

    #[test]
    fn path_budget_is_respected() {
        // A chain of JUMPIs doubles the path count at each step.
        let mut code = Vec::new();
        for _ in 0..20 {
            code.extend_from_slice(&[op::PUSH1, 0, op::CALLDATALOAD, op::JUMPI]);
        }
        code.push(op::STOP);
        let budget = ExecBudget {
            max_paths: 16,
            ..Default::default()
        };
        let outcome = sym_exec(&code, &budget);
        assert!(outcome.paths_explored <= 16);
        assert!(outcome.total_steps <= 16 * budget.max_steps_per_path);
    }

    #[test]
    fn step_budget_truncates() {
        let budget = ExecBudget {
            max_steps_per_path: 4,
            ..Default::default()
        };
        let mut code = Vec::new();
        for _ in 0..10 {
            code.extend_from_slice(&[op::PUSH1, 0, op::POP]);
        }
        let outcome = sym_exec(&code, &budget);
        assert!(!outcome.terminated_normally);
    }

    #[test]
    fn probe_operands_are_recorded() {
        let mut code = Vec::new();
        code.push(op::PUSH20);
        code.extend_from_slice(&[0x44; 20]);
        code.push(op::EXTCODESIZE);
        code.push(op::POP);
        let outcome = sym_exec(&code, &ExecBudget::default());
        assert_eq!(outcome.probes.len(), 1);
        assert_eq!(outcome.probes[0].target, Address([0x44; 20]));
        assert_eq!(outcome.probes[0].opcode, ProbeOpcode::ExtCodeSize);
    }

    #[test]
    fn folding_wraps_modulo_2_256() {
        // (2^256 - 1) + 2 == 1
        let mut code = vec![op::PUSH1, 2, op::PUSH32];
        code.extend_from_slice(&[0xff; 32]);
        code.push(op::ADD);
        let outcome = sym_exec(&code, &ExecBudget::default());
        assert_eq!(
            outcome.final_states[0].stack(),
            &[Word::Concrete(U256::one())]
        );
    }

    #[test]
    fn division_by_zero_folds_to_zero() {
        let code = [op::PUSH1, 0, op::PUSH1, 7, op::DIV];
        let outcome = sym_exec(&code, &ExecBudget::default());
        assert_eq!(
            outcome.final_states[0].stack(),
            &[Word::Concrete(U256::zero())]
        );
    }

    #[test]
    fn environment_reads_are_symbolic() {
        let code = [op::CALLER, op::TIMESTAMP];
        let outcome = sym_exec(&code, &ExecBudget::default());
        let stack = outcome.final_states[0].stack();
        assert!(matches!(&stack[0], Word::Symbolic(tag) if tag == "CALLER@0"));
        assert!(matches!(&stack[1], Word::Symbolic(tag) if tag == "TIMESTAMP@1"));
    }
}
