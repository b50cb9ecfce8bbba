//! Brute-force concrete interpreter used to cross-check the static analyses.
//!
//! This is a from-scratch reference machine: it dispatches on raw bytes with
//! its own arity knowledge and computes with `num-bigint` integers reduced
//! modulo 2^256, sharing no table or arithmetic with `isa`/`symexec`. It is
//! test infrastructure, not part of the detection pipeline.
//!
//! Opcodes whose semantics do not matter for depth or call-target checks
//! (hashing, memory, storage, block context) consume their operands and push
//! a value that is a fixed deterministic function of (opcode, step, seed).
//! Call-family opcodes do not enter the callee; they push 1, the success
//! flag a caller observes even when the callee no longer exists.

use std::collections::BTreeMap;

use num_bigint::BigUint;

use crate::types::{Address, U256};

/// Concrete execution environment; lookups are total (default zero/empty).
#[derive(Clone, Debug, Default)]
pub struct ConcreteEnv {
    pub calldata: Vec<u8>,
    pub caller: Address,
    pub timestamp: u64,
    pub balances: BTreeMap<Address, U256>,
    pub extcode: BTreeMap<Address, Vec<u8>>,
    /// Seed for the deterministic values pushed by unmodeled opcodes.
    pub value_seed: u64,
}

/// Why the interpreter stopped.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HaltReason {
    Stop,
    Return,
    Revert,
    SelfDestruct,
    /// Ran past the end of code (implicit STOP).
    CodeEnd,
    StackUnderflow {
        at_offset: usize,
    },
    StackOverflow {
        at_offset: usize,
    },
    BadInstruction {
        at_offset: usize,
    },
    InvalidJump {
        at_offset: usize,
    },
    StepLimit,
}

impl HaltReason {
    /// True for the two stack-fault reasons.
    pub fn is_stack_fault(&self) -> bool {
        matches!(
            self,
            HaltReason::StackUnderflow { .. } | HaltReason::StackOverflow { .. }
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub offset: usize,
    pub opcode: u8,
    pub depth_before: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CallRecord {
    pub opcode: u8,
    pub target: Address,
    pub at_offset: usize,
}

/// Full record of one concrete run.
#[derive(Clone, Debug)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub calls: Vec<CallRecord>,
    pub halt: HaltReason,
    /// Machine stack at halt, bottom first.
    pub final_stack: Vec<U256>,
}

impl Trace {
    pub fn final_depth(&self) -> usize {
        self.final_stack.len()
    }
}

const STACK_LIMIT: usize = 1024;

fn modulus() -> BigUint {
    BigUint::from(1u8) << 256usize
}

fn sign_bit() -> BigUint {
    BigUint::from(1u8) << 255usize
}

fn to_u256(v: &BigUint) -> U256 {
    let bytes = v.to_bytes_be();
    let mut buf = [0u8; 32];
    buf[32 - bytes.len()..].copy_from_slice(&bytes);
    U256::from_big_endian(&buf)
}

fn from_u256(v: &U256) -> BigUint {
    BigUint::from_bytes_be(&v.to_big_endian())
}

fn address_of(v: &BigUint) -> Address {
    let low = v % (BigUint::from(1u8) << 160usize);
    let bytes = low.to_bytes_be();
    let mut out = [0u8; 20];
    out[20 - bytes.len()..].copy_from_slice(&bytes);
    Address(out)
}

/// Two's-complement negate modulo 2^256.
fn neg(v: &BigUint) -> BigUint {
    if v.bits() == 0 {
        BigUint::from(0u8)
    } else {
        modulus() - v
    }
}

fn is_negative(v: &BigUint) -> bool {
    *v >= sign_bit()
}

fn magnitude(v: &BigUint) -> (bool, BigUint) {
    if is_negative(v) {
        (true, neg(v))
    } else {
        (false, v.clone())
    }
}

/// Deterministic filler for opcodes whose real value is irrelevant here.
fn pseudo_value(opcode: u8, step: usize, seed: u64) -> BigUint {
    let mut words = Vec::with_capacity(4);
    let mut x = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(opcode as u64)
        .wrapping_add((step as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    for _ in 0..4 {
        x ^= x >> 30;
        x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 27;
        x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
        words.push(x);
    }
    let mut bytes = Vec::with_capacity(32);
    for w in words {
        bytes.extend_from_slice(&w.to_be_bytes());
    }
    BigUint::from_bytes_be(&bytes)
}

/// Jump destinations: offsets holding 0x5b outside PUSH immediates.
fn scan_jumpdests(code: &[u8]) -> Vec<usize> {
    let mut dests = Vec::new();
    let mut pc = 0usize;
    while pc < code.len() {
        let b = code[pc];
        if b == 0x5b {
            dests.push(pc);
        }
        pc += 1 + if (0x60..=0x7f).contains(&b) {
            (b - 0x5f) as usize
        } else {
            0
        };
    }
    dests
}

struct Machine<'a> {
    code: &'a [u8],
    env: &'a ConcreteEnv,
    stack: Vec<BigUint>,
    trace: Trace,
    jumpdests: Vec<usize>,
}

enum Flow {
    Next(usize),
    Goto(usize),
    Halt(HaltReason),
}

impl<'a> Machine<'a> {
    fn push(&mut self, v: BigUint) {
        debug_assert!(v < modulus());
        self.stack.push(v);
    }

    fn pop(&mut self) -> BigUint {
        self.stack.pop().expect("arity checked before dispatch")
    }

    fn binary(&mut self, f: impl Fn(BigUint, BigUint) -> BigUint) {
        let a = self.pop();
        let b = self.pop();
        self.push(f(a, b) % modulus());
    }

    fn push_pseudo(&mut self, opcode: u8, step: usize) {
        self.push(pseudo_value(opcode, step, self.env.value_seed));
    }

    /// Pops `n`, pushes a pseudo value: the shape of every unmodeled opcode.
    fn unmodeled(&mut self, opcode: u8, step: usize, pops: usize) {
        for _ in 0..pops {
            self.pop();
        }
        self.push_pseudo(opcode, step);
    }

    fn exec(&mut self, pc: usize, opcode: u8, step: usize) -> Flow {
        let mut next = pc + 1;
        match opcode {
            0x00 => return Flow::Halt(HaltReason::Stop),
            0x01 => self.binary(|a, b| a + b),
            0x02 => self.binary(|a, b| a * b),
            0x03 => self.binary(|a, b| (modulus() + a) - b),
            0x04 => self.binary(|a, b| {
                if b.bits() == 0 {
                    BigUint::from(0u8)
                } else {
                    a / b
                }
            }),
            0x05 => {
                let a = self.pop();
                let b = self.pop();
                let (na, ma) = magnitude(&a);
                let (nb, mb) = magnitude(&b);
                let q = if mb.bits() == 0 {
                    BigUint::from(0u8)
                } else {
                    ma / mb
                };
                self.push(if na != nb { neg(&q) } else { q });
            }
            0x06 => self.binary(|a, b| {
                if b.bits() == 0 {
                    BigUint::from(0u8)
                } else {
                    a % b
                }
            }),
            0x07 => {
                let a = self.pop();
                let b = self.pop();
                let (na, ma) = magnitude(&a);
                let (_, mb) = magnitude(&b);
                let r = if mb.bits() == 0 {
                    BigUint::from(0u8)
                } else {
                    ma % mb
                };
                self.push(if na { neg(&r) } else { r });
            }
            0x08 => {
                let a = self.pop();
                let b = self.pop();
                let n = self.pop();
                self.push(if n.bits() == 0 {
                    BigUint::from(0u8)
                } else {
                    (a + b) % n
                });
            }
            0x09 => {
                let a = self.pop();
                let b = self.pop();
                let n = self.pop();
                self.push(if n.bits() == 0 {
                    BigUint::from(0u8)
                } else {
                    (a * b) % n
                });
            }
            0x0a => {
                let base = self.pop();
                let exponent = self.pop();
                self.push(base.modpow(&exponent, &modulus()));
            }
            0x0b => {
                let index = self.pop();
                let value = self.pop();
                if index >= BigUint::from(31u8) {
                    self.push(value);
                } else {
                    let i: usize = index.try_into().expect("< 31");
                    let bit = 8 * i + 7;
                    let mask = (BigUint::from(1u8) << (bit + 1)) - 1u8;
                    if (value.clone() >> bit) & BigUint::from(1u8) == BigUint::from(1u8) {
                        self.push((modulus() - 1u8) - mask.clone() + (value & mask));
                    } else {
                        self.push(value & mask);
                    }
                }
            }
            0x10 => self.binary(|a, b| BigUint::from(u8::from(a < b))),
            0x11 => self.binary(|a, b| BigUint::from(u8::from(a > b))),
            0x12 | 0x13 => {
                let a = self.pop();
                let b = self.pop();
                let (na, ma) = magnitude(&a);
                let (nb, mb) = magnitude(&b);
                let slt = match (na, nb) {
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => ma < mb,
                    (true, true) => ma > mb,
                };
                let out = if opcode == 0x12 { slt } else { !slt && a != b };
                self.push(BigUint::from(u8::from(out)));
            }
            0x14 => self.binary(|a, b| BigUint::from(u8::from(a == b))),
            0x15 => {
                let a = self.pop();
                self.push(BigUint::from(u8::from(a.bits() == 0)));
            }
            0x16 => self.binary(|a, b| a & b),
            0x17 => self.binary(|a, b| a | b),
            0x18 => self.binary(|a, b| a ^ b),
            0x19 => {
                let a = self.pop();
                self.push((modulus() - 1u8) - a);
            }
            0x1a => {
                let index = self.pop();
                let value = self.pop();
                if index >= BigUint::from(32u8) {
                    self.push(BigUint::from(0u8));
                } else {
                    let i: usize = index.try_into().expect("< 32");
                    self.push((value >> (8 * (31 - i))) & BigUint::from(0xffu8));
                }
            }
            0x1b => {
                let shift = self.pop();
                let value = self.pop();
                if shift >= BigUint::from(256u16) {
                    self.push(BigUint::from(0u8));
                } else {
                    let s: usize = shift.try_into().expect("< 256");
                    self.push((value << s) % modulus());
                }
            }
            0x1c => {
                let shift = self.pop();
                let value = self.pop();
                if shift >= BigUint::from(256u16) {
                    self.push(BigUint::from(0u8));
                } else {
                    let s: usize = shift.try_into().expect("< 256");
                    self.push(value >> s);
                }
            }
            0x1d => {
                let shift = self.pop();
                let value = self.pop();
                let negative = is_negative(&value);
                if shift >= BigUint::from(256u16) {
                    self.push(if negative {
                        modulus() - 1u8
                    } else {
                        BigUint::from(0u8)
                    });
                } else {
                    let s: usize = shift.try_into().expect("< 256");
                    let mut out = value >> s;
                    if negative && s > 0 {
                        let fill = ((BigUint::from(1u8) << s) - 1u8) << (256 - s);
                        out |= fill;
                    }
                    self.push(out);
                }
            }
            0x20 => self.unmodeled(opcode, step, 2), // KECCAK256
            0x30 => self.unmodeled(opcode, step, 0), // ADDRESS
            0x31 => {
                let addr = address_of(&self.pop());
                let bal = self.env.balances.get(&addr).copied().unwrap_or_default();
                self.push(from_u256(&bal));
            }
            0x32 => self.unmodeled(opcode, step, 0), // ORIGIN
            0x33 => self.push(BigUint::from_bytes_be(self.env.caller.as_bytes())),
            0x34 => self.unmodeled(opcode, step, 0), // CALLVALUE
            0x35 => {
                let index = self.pop();
                let mut word = [0u8; 32];
                if let Ok(start) = usize::try_from(&index) {
                    for (i, slot) in word.iter_mut().enumerate() {
                        *slot = start
                            .checked_add(i)
                            .and_then(|p| self.env.calldata.get(p).copied())
                            .unwrap_or(0);
                    }
                }
                self.push(BigUint::from_bytes_be(&word));
            }
            0x36 => self.push(BigUint::from(self.env.calldata.len())),
            0x37 | 0x39 | 0x3e => {
                for _ in 0..3 {
                    self.pop();
                }
            }
            0x38 => self.push(BigUint::from(self.code.len())),
            0x3a => self.unmodeled(opcode, step, 0), // GASPRICE
            0x3b => {
                let addr = address_of(&self.pop());
                let len = self.env.extcode.get(&addr).map(|c| c.len()).unwrap_or(0);
                self.push(BigUint::from(len));
            }
            0x3c => {
                for _ in 0..4 {
                    self.pop();
                }
            }
            0x3d => self.unmodeled(opcode, step, 0), // RETURNDATASIZE
            0x3f => self.unmodeled(opcode, step, 1), // EXTCODEHASH
            0x40 => self.unmodeled(opcode, step, 1), // BLOCKHASH
            0x41 | 0x43 | 0x44 | 0x45 | 0x46 | 0x47 => self.unmodeled(opcode, step, 0),
            0x42 => self.push(BigUint::from(self.env.timestamp)),
            0x50 => {
                self.pop();
            }
            0x51 => self.unmodeled(opcode, step, 1), // MLOAD
            0x52 | 0x53 | 0x55 => {
                self.pop();
                self.pop();
            }
            0x54 => self.unmodeled(opcode, step, 1), // SLOAD
            0x56 => {
                let target = self.pop();
                return match usize::try_from(&target) {
                    Ok(dest) if self.jumpdests.contains(&dest) => Flow::Goto(dest),
                    _ => Flow::Halt(HaltReason::InvalidJump { at_offset: pc }),
                };
            }
            0x57 => {
                let target = self.pop();
                let condition = self.pop();
                if condition.bits() != 0 {
                    return match usize::try_from(&target) {
                        Ok(dest) if self.jumpdests.contains(&dest) => Flow::Goto(dest),
                        _ => Flow::Halt(HaltReason::InvalidJump { at_offset: pc }),
                    };
                }
            }
            0x58 => self.push(BigUint::from(pc)),
            0x59 | 0x5a => self.unmodeled(opcode, step, 0), // MSIZE, GAS
            0x5b => {}
            0x60..=0x7f => {
                let n = (opcode - 0x5f) as usize;
                let mut imm = vec![0u8; n];
                for (i, slot) in imm.iter_mut().enumerate() {
                    *slot = self.code.get(pc + 1 + i).copied().unwrap_or(0);
                }
                self.push(BigUint::from_bytes_be(&imm));
                next = pc + 1 + n;
            }
            0x80..=0x8f => {
                let n = (opcode - 0x80) as usize + 1;
                let dup = self.stack[self.stack.len() - n].clone();
                self.push(dup);
            }
            0x90..=0x9f => {
                let n = (opcode - 0x90) as usize + 1;
                let top = self.stack.len() - 1;
                self.stack.swap(top, top - n);
            }
            0xa0..=0xa4 => {
                let n = (opcode - 0xa0) as usize + 2;
                for _ in 0..n {
                    self.pop();
                }
            }
            0xf0 => self.unmodeled(opcode, step, 3), // CREATE
            0xf5 => self.unmodeled(opcode, step, 4), // CREATE2
            0xf1 | 0xf2 | 0xf4 | 0xfa => {
                let pops = if opcode == 0xf1 || opcode == 0xf2 {
                    7
                } else {
                    6
                };
                let target = address_of(&self.stack[self.stack.len() - 2]);
                self.trace.calls.push(CallRecord {
                    opcode,
                    target,
                    at_offset: pc,
                });
                for _ in 0..pops {
                    self.pop();
                }
                // Calls to anything, including removed accounts, report success.
                self.push(BigUint::from(1u8));
            }
            0xf3 => {
                self.pop();
                self.pop();
                return Flow::Halt(HaltReason::Return);
            }
            0xfd => {
                self.pop();
                self.pop();
                return Flow::Halt(HaltReason::Revert);
            }
            0xff => {
                self.pop();
                return Flow::Halt(HaltReason::SelfDestruct);
            }
            _ => unreachable!("arity table covers every executable opcode"),
        }
        Flow::Next(next)
    }
}

/// (pops, pushes) per executable opcode; None marks bad instructions.
fn arity(opcode: u8) -> Option<(usize, usize)> {
    Some(match opcode {
        0x00 => (0, 0),
        0x01..=0x07 => (2, 1),
        0x08 | 0x09 => (3, 1),
        0x0a | 0x0b => (2, 1),
        0x10..=0x14 => (2, 1),
        0x15 => (1, 1),
        0x16..=0x18 => (2, 1),
        0x19 => (1, 1),
        0x1a..=0x1d => (2, 1),
        0x20 => (2, 1),
        0x30 => (0, 1),
        0x31 => (1, 1),
        0x32..=0x34 => (0, 1),
        0x35 => (1, 1),
        0x36 => (0, 1),
        0x37 => (3, 0),
        0x38 => (0, 1),
        0x39 => (3, 0),
        0x3a => (0, 1),
        0x3b => (1, 1),
        0x3c => (4, 0),
        0x3d => (0, 1),
        0x3e => (3, 0),
        0x3f => (1, 1),
        0x40 => (1, 1),
        0x41..=0x47 => (0, 1),
        0x50 => (1, 0),
        0x51 => (1, 1),
        0x52 | 0x53 => (2, 0),
        0x54 => (1, 1),
        0x55 => (2, 0),
        0x56 => (1, 0),
        0x57 => (2, 0),
        0x58..=0x5a => (0, 1),
        0x5b => (0, 0),
        0x60..=0x7f => (0, 1),
        0x80..=0x8f => ((opcode - 0x80) as usize + 1, (opcode - 0x80) as usize + 2),
        0x90..=0x9f => ((opcode - 0x90) as usize + 2, (opcode - 0x90) as usize + 2),
        0xa0..=0xa4 => ((opcode - 0xa0) as usize + 2, 0),
        0xf0 => (3, 1),
        0xf1 | 0xf2 => (7, 1),
        0xf3 => (2, 0),
        0xf4 => (6, 1),
        0xf5 => (4, 1),
        0xfa => (6, 1),
        0xfd => (2, 0),
        0xff => (1, 0),
        // Everything else, including post-Istanbul assignments, faults.
        _ => return None,
    })
}

/// Runs `code` concretely until a halt condition or `step_limit` steps.
pub fn run_concrete(code: &[u8], env: &ConcreteEnv, step_limit: usize) -> Trace {
    assert!(step_limit > 0, "step_limit must be positive");
    let mut machine = Machine {
        code,
        env,
        stack: Vec::new(),
        trace: Trace {
            steps: Vec::new(),
            calls: Vec::new(),
            halt: HaltReason::CodeEnd,
            final_stack: Vec::new(),
        },
        jumpdests: scan_jumpdests(code),
    };

    let mut pc = 0usize;
    let halt = loop {
        if pc >= code.len() {
            break HaltReason::CodeEnd;
        }
        if machine.trace.steps.len() >= step_limit {
            break HaltReason::StepLimit;
        }
        let opcode = code[pc];
        let step = machine.trace.steps.len();
        machine.trace.steps.push(StepRecord {
            offset: pc,
            opcode,
            depth_before: machine.stack.len(),
        });

        let Some((pops, pushes)) = arity(opcode) else {
            break HaltReason::BadInstruction { at_offset: pc };
        };
        if pops > machine.stack.len() {
            break HaltReason::StackUnderflow { at_offset: pc };
        }
        if machine.stack.len() - pops + pushes > STACK_LIMIT {
            break HaltReason::StackOverflow { at_offset: pc };
        }

        match machine.exec(pc, opcode, step) {
            Flow::Next(n) => pc = n,
            Flow::Goto(dest) => pc = dest,
            Flow::Halt(reason) => break reason,
        }
    };

    machine.trace.halt = halt;
    machine.trace.final_stack = machine.stack.iter().map(to_u256).collect();
    machine.trace
}
