//! Decoder and interpreter checked against outside references.
//!
//! The fixture holds words assembled by LLVM with the intended fields, plus
//! random words classified by capstone. Execution is compared against the
//! bit-level interpreter in `refexec` on seeded random encodings. The
//! includer must also declare `mod refexec`.

#![allow(dead_code)]

use hetmesh::cpu::{CoreState, FlatMemory, InstructionTimingTable, Trap};
use hetmesh::isa::{decode, Mnemonic, Reg};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::refexec::{RefMachine, RefTrap};

const FIXTURE: &str = include_str!("../fixtures/isa_oracle.txt");

fn word(s: &str) -> u32 {
    u32::from_str_radix(s.trim_start_matches("0x"), 16).unwrap()
}

fn same<T: PartialEq + std::fmt::Debug>(got: T, want: T, what: &str) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, want {want:?}"))
    }
}

/// Checks every LLVM-assembled word's decoded fields. Returns the count.
pub fn llvm_fields() -> Result<usize, String> {
    let mut n = 0;
    for line in FIXTURE.lines().filter(|l| l.starts_with("asm ")) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let w = word(f[1]);
        let inst = decode(w).map_err(|e| format!("{line}: {e}"))?;
        let num = |i: usize| f[i].parse::<i64>().unwrap();
        same(Some(inst.op), Mnemonic::from_name(f[2]), line)?;
        same(inst.rd.index() as i64, num(3), &format!("rd: {line}"))?;
        same(inst.rs1.index() as i64, num(4), &format!("rs1: {line}"))?;
        same(inst.rs2.index() as i64, num(5), &format!("rs2: {line}"))?;
        same(inst.imm as i64, num(6), &format!("imm: {line}"))?;
        same(inst.csr as i64, num(7), &format!("csr: {line}"))?;
        n += 1;
    }
    Ok(n)
}

/// Checks accept/reject of every capstone-classified word. Returns the count.
pub fn capstone_legality() -> Result<usize, String> {
    let mut n = 0;
    for line in FIXTURE.lines().filter(|l| l.starts_with("raw ")) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let w = word(f[1]);
        // capstone rejects fences with a reserved `fm` field; the base ISA
        // says to execute those as ordinary fences, which is what we do.
        let reserved_fence = w & 0x707f == 0x000f && !matches!(w >> 28, 0 | 8);
        let accept = f[2] == "accept" || reserved_fence;
        same(decode(w).is_ok(), accept, line)?;
        n += 1;
    }
    Ok(n)
}

const OPCODES: [u32; 11] = [0x37, 0x17, 0x6f, 0x67, 0x63, 0x03, 0x23, 0x13, 0x33, 0x0f, 0x73];
const MEM_SIZE: usize = 0x1_0000;
const PC: u32 = 0x8000;
const FETCH: u64 = 4;

/// A random word on a base opcode, with fields nudged towards legal values.
fn random_word(rng: &mut ChaCha8Rng) -> u32 {
    let mut w = rng.gen::<u32>() & !0x7f | OPCODES[rng.gen_range(0..OPCODES.len())];
    if rng.gen_bool(0.5) {
        // funct7 0 or 0x20 keeps most register ops and shifts legal
        w = w & 0x01ff_ffff | if rng.gen_bool(0.5) { 0 } else { 0x20 << 25 };
    }
    if w & 0x7f == 0x73 && rng.gen_bool(0.5) {
        let csr = [0xc00u32, 0xc80, 0xc01, 0x340][rng.gen_range(0..4)];
        w = w & 0xf_ffff | csr << 20;
        if rng.gen_bool(0.5) {
            w &= !(0x1f << 15);
        }
    }
    w
}

fn core_trap(t: Trap) -> RefTrap {
    match t {
        Trap::IllegalInstruction { .. } => RefTrap::Illegal,
        Trap::MisalignedLoad { addr, .. } => RefTrap::MisalignedLoad(addr),
        Trap::MisalignedStore { addr, .. } => RefTrap::MisalignedStore(addr),
        Trap::LoadFault { addr, .. } => RefTrap::LoadFault(addr),
        Trap::StoreFault { addr, .. } => RefTrap::StoreFault(addr),
        Trap::Ecall { .. } => RefTrap::Ecall,
        Trap::Ebreak { .. } => RefTrap::Ebreak,
        Trap::IllegalCsr { .. } => RefTrap::Csr,
        other => panic!("unexpected trap {other}"),
    }
}

pub struct ExecSummary {
    pub executed: usize,
    pub rejected: usize,
}

/// Runs random words until `count` executed without trapping, comparing
/// registers, pc, memory and trap kind after every single step.
pub fn execution(count: usize, seed: u64) -> Result<ExecSummary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let timing = InstructionTimingTable::default();
    let (mut executed, mut rejected) = (0, 0);
    while executed < count {
        let w = random_word(&mut rng);
        let mut regs = [0u32; 32];
        for r in regs.iter_mut().skip(1) {
            *r = match rng.gen_range(0..4) {
                0 => rng.gen(),
                1 => rng.gen_range(0..32),
                // near data so loads and stores mostly land in memory
                _ => rng.gen_range(0x100..MEM_SIZE as u32 - 0x100) & !rng.gen_range(0..4u32),
            };
        }
        let mut image: Vec<u8> = (0..MEM_SIZE).map(|_| rng.gen()).collect();
        image[PC as usize..PC as usize + 4].copy_from_slice(&w.to_le_bytes());

        let mut mem = FlatMemory::new(0, MEM_SIZE, FETCH);
        mem.load_bytes(0, &image).unwrap();
        let mut core = CoreState::running(PC);
        for (i, &v) in regs.iter().enumerate() {
            core.set_reg(Reg::new(i as u8), v);
        }
        let step = core.step(&timing, &mut mem).unwrap();

        let mut reference =
            RefMachine { pc: PC, x: regs, mem_base: 0, mem: image, cycle_at_exec: FETCH + timing.system as u64 };
        let expected = reference.step(w);
        let ctx = format!("{w:#010x} {:?}", step.instruction.map(|i| i.to_string()));
        same(step.trap.map(core_trap).map_or(Ok(()), Err), expected.clone(), &ctx)?;
        same(core.regs(), &reference.x, &ctx)?;
        if expected.is_ok() {
            same(core.pc, reference.pc, &ctx)?;
            executed += 1;
        } else {
            rejected += 1;
        }
        for a in (0..MEM_SIZE as u32).step_by(4) {
            let r = u32::from_le_bytes(reference.mem[a as usize..a as usize + 4].try_into().unwrap());
            same(mem.read_u32(a).unwrap(), r, &format!("{ctx} memory at {a:#x}"))?;
        }
    }
    Ok(ExecSummary { executed, rejected })
}
