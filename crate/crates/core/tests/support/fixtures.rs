//! Bytecode fixtures: minimal reconstructions of each flagged pattern, plus
//! real compiled contract bytecodes used as known-good inputs.

use deadwood_core::isa::op;
use deadwood_core::types::{parse_hex_bytes, Address};

/// Meaningless contract halted by its first byte.
pub fn mc_s() -> Vec<u8> {
    vec![op::STOP]
}

/// Three-instruction contract whose every call self-destructs, forwarding
/// the balance to whatever address the caller puts in the calldata.
pub fn mc_rs_selfdestruct() -> Vec<u8> {
    vec![op::PUSH1, 0x00, op::CALLDATALOAD, op::SELFDESTRUCT]
}

/// Classic revert stub: offsets 0x0..0x8 run on every call and REVERT.
pub fn mc_rs_revert() -> Vec<u8> {
    parse_hex_bytes("6080604052600080fd").expect("valid hex")
}

/// DIV as the first operation: pops two from an empty stack.
pub fn stack_error() -> Vec<u8> {
    vec![op::DIV, op::STOP]
}

/// Unassigned first bytes 0xd9 0x29: disassembly fails immediately.
pub fn opcode_error() -> Vec<u8> {
    vec![0xd9, 0x29, op::STOP]
}

/// A single basic block probing `n` addresses with EXTCODESIZE.
pub fn dos_block(n: usize) -> Vec<u8> {
    let mut code = Vec::with_capacity(n * 23);
    for i in 0..n {
        code.push(op::PUSH20);
        let mut target = [0u8; 20];
        target[0] = 0xb0;
        target[18] = (i >> 8) as u8;
        target[19] = i as u8;
        code.extend_from_slice(&target);
        code.push(op::EXTCODESIZE);
        code.push(op::POP);
    }
    code
}

/// Minimal wallet: every call DELEGATECALLs the hardcoded library.
pub fn wallet_stub(library: Address) -> Vec<u8> {
    let mut code = Vec::new();
    for _ in 0..4 {
        code.extend_from_slice(&[op::PUSH1, 0]);
    }
    code.push(op::PUSH20);
    code.extend_from_slice(library.as_bytes());
    code.extend_from_slice(&[0x61, 0xff, 0xff, op::DELEGATECALL, op::STOP]);
    code
}

/// Wallet with a conditional entry: one branch stops at a JUMPDEST, the
/// fallback DELEGATECALLs the library, so detection must fork at the JUMPI.
pub fn wallet_dispatcher(library: Address) -> Vec<u8> {
    let mut code = vec![op::PUSH1, 0, op::CALLDATALOAD, op::ISZERO];
    let stub = wallet_stub(library);
    let dest = (code.len() + 3 + stub.len()) as u8;
    code.extend_from_slice(&[op::PUSH1, dest, op::JUMPI]);
    code.extend_from_slice(&stub);
    code.extend_from_slice(&[op::JUMPDEST, op::STOP]);
    code
}

/// Real compiled contract bytecodes (hex dumps of deployed Solidity
/// artifacts); all of them are ordinary working contracts.
pub fn real_contracts() -> Vec<Vec<u8>> {
    [
        include_str!("data/real_1.hex"),
        include_str!("data/real_2.hex"),
        include_str!("data/real_3.hex"),
        include_str!("data/real_4.hex"),
        include_str!("data/real_5.hex"),
        include_str!("data/real_6.hex"),
        include_str!("data/real_7.hex"),
    ]
    .iter()
    .map(|blob| parse_hex_bytes(blob.trim()).expect("fixture hex"))
    .collect()
}
