//! Multicycle RV32I core model.
//!
//! The core is strictly serial: every step fetches one instruction, executes
//! it, and performs at most one data access. The cycle counter advances by
//! the fetch latency, the per-class execution cycles, and the data latency.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{decode_at, Instruction, Mnemonic, OpClass, Reg, CSR_CYCLE, CSR_CYCLEH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Width {
    Byte,
    Half,
    Word,
}

impl Width {
    pub fn bytes(self) -> u32 {
        match self {
            Width::Byte => 1,
            Width::Half => 2,
            Width::Word => 4,
        }
    }

    pub fn from_bytes(n: u32) -> Option<Width> {
        match n {
            1 => Some(Width::Byte),
            2 => Some(Width::Half),
            4 => Some(Width::Word),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    InstrFetch,
    Load,
    Store,
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::InstrFetch => "fetch",
            AccessKind::Load => "load",
            AccessKind::Store => "store",
        })
    }
}

/// A request from a core to its memory port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PortRequest {
    pub kind: AccessKind,
    pub addr: u32,
    pub width: Width,
    /// Store payload, zero-extended; ignored for fetches and loads.
    pub data: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PortResponse {
    /// Loaded value, zero-extended to 32 bits.
    pub data: u32,
    pub latency: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("memory fault at {addr:#010x}")]
pub struct MemFault {
    pub addr: u32,
}

/// Where a core's fetches and data accesses go. Requests are always aligned.
pub trait MemoryPort {
    /// `now` is the global cycle at which the access is issued.
    fn access(&mut self, req: PortRequest, now: u64) -> Result<PortResponse, MemFault>;
}

/// A flat little-endian memory with a fixed access latency.
#[derive(Clone, Debug)]
pub struct FlatMemory {
    base: u32,
    bytes: Vec<u8>,
    latency: u64,
}

impl FlatMemory {
    pub fn new(base: u32, size: usize, latency: u64) -> FlatMemory {
        FlatMemory { base, bytes: vec![0; size], latency }
    }

    pub fn load_bytes(&mut self, addr: u32, data: &[u8]) -> Result<(), MemFault> {
        let off = self.offset(addr, data.len() as u32)?;
        self.bytes[off..off + data.len()].copy_from_slice(data);
        Ok(())
    }

    pub fn read_u32(&self, addr: u32) -> Result<u32, MemFault> {
        let off = self.offset(addr, 4)?;
        Ok(u32::from_le_bytes(self.bytes[off..off + 4].try_into().expect("4 bytes")))
    }

    pub fn write_u32(&mut self, addr: u32, value: u32) -> Result<(), MemFault> {
        self.load_bytes(addr, &value.to_le_bytes())
    }

    fn offset(&self, addr: u32, len: u32) -> Result<usize, MemFault> {
        let off = addr.checked_sub(self.base).ok_or(MemFault { addr })? as usize;
        if off + len as usize > self.bytes.len() {
            return Err(MemFault { addr });
        }
        Ok(off)
    }
}

impl MemoryPort for FlatMemory {
    fn access(&mut self, req: PortRequest, _now: u64) -> Result<PortResponse, MemFault> {
        let n = req.width.bytes() as usize;
        let off = self.offset(req.addr, n as u32)?;
        let mut data = 0;
        match req.kind {
            AccessKind::Store => {
                self.bytes[off..off + n].copy_from_slice(&req.data.to_le_bytes()[..n]);
            }
            _ => {
                let mut buf = [0u8; 4];
                buf[..n].copy_from_slice(&self.bytes[off..off + n]);
                data = u32::from_le_bytes(buf);
            }
        }
        Ok(PortResponse { data, latency: self.latency })
    }
}

/// Execution cycles per opcode class, excluding memory latency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstructionTimingTable {
    pub lui: u32,
    pub auipc: u32,
    pub jal: u32,
    pub jalr: u32,
    pub branch_taken: u32,
    pub branch_not_taken: u32,
    pub load: u32,
    pub store: u32,
    pub op_imm: u32,
    pub op: u32,
    pub fence: u32,
    /// CSR reads, ECALL and EBREAK. Zero by default: the counter sample of
    /// `rdcycle` retires with its fetch, which is what makes a
    /// `rdcycle; lw; rdcycle` bracket measure exactly one load plus the
    /// second fetch.
    pub system: u32,
}

impl Default for InstructionTimingTable {
    fn default() -> Self {
        InstructionTimingTable {
            lui: 3,
            auipc: 3,
            jal: 3,
            jalr: 3,
            branch_taken: 3,
            branch_not_taken: 3,
            load: 5,
            store: 5,
            op_imm: 3,
            op: 3,
            fence: 1,
            system: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("instruction timing entry `{0}` must be at least 1 cycle")]
pub struct TimingTableError(pub &'static str);

impl InstructionTimingTable {
    pub fn validate(&self) -> Result<(), TimingTableError> {
        let entries = [
            ("lui", self.lui),
            ("auipc", self.auipc),
            ("jal", self.jal),
            ("jalr", self.jalr),
            ("branch_taken", self.branch_taken),
            ("branch_not_taken", self.branch_not_taken),
            ("load", self.load),
            ("store", self.store),
            ("op_imm", self.op_imm),
            ("op", self.op),
            ("fence", self.fence),
        ];
        match entries.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(TimingTableError(name)),
            None => Ok(()),
        }
    }

    pub fn cycles(&self, class: OpClass, taken: bool) -> u32 {
        match class {
            OpClass::Lui => self.lui,
            OpClass::Auipc => self.auipc,
            OpClass::Jal => self.jal,
            OpClass::Jalr => self.jalr,
            OpClass::Branch if taken => self.branch_taken,
            OpClass::Branch => self.branch_not_taken,
            OpClass::Load => self.load,
            OpClass::Store => self.store,
            OpClass::OpImm => self.op_imm,
            OpClass::Op => self.op,
            OpClass::Fence => self.fence,
            OpClass::System => self.system,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trap {
    MisalignedFetch { pc: u32 },
    MisalignedLoad { pc: u32, addr: u32 },
    MisalignedStore { pc: u32, addr: u32 },
    IllegalInstruction { pc: u32, word: u32 },
    IllegalCsr { pc: u32, csr: u16 },
    FetchFault { pc: u32 },
    LoadFault { pc: u32, addr: u32 },
    StoreFault { pc: u32, addr: u32 },
    Ecall { pc: u32 },
    Ebreak { pc: u32 },
}

impl Trap {
    /// The reported pc; for a misaligned fetch this is the bad target.
    pub fn pc(&self) -> u32 {
        match *self {
            Trap::MisalignedFetch { pc }
            | Trap::MisalignedLoad { pc, .. }
            | Trap::MisalignedStore { pc, .. }
            | Trap::IllegalInstruction { pc, .. }
            | Trap::IllegalCsr { pc, .. }
            | Trap::FetchFault { pc }
            | Trap::LoadFault { pc, .. }
            | Trap::StoreFault { pc, .. }
            | Trap::Ecall { pc }
            | Trap::Ebreak { pc } => pc,
        }
    }
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Trap::MisalignedFetch { pc } => write!(f, "misaligned fetch at pc {pc:#010x}"),
            Trap::MisalignedLoad { pc, addr } => {
                write!(f, "misaligned load of {addr:#010x} at pc {pc:#010x}")
            }
            Trap::MisalignedStore { pc, addr } => {
                write!(f, "misaligned store to {addr:#010x} at pc {pc:#010x}")
            }
            Trap::IllegalInstruction { pc, word } => {
                write!(f, "illegal instruction {word:#010x} at pc {pc:#010x}")
            }
            Trap::IllegalCsr { pc, csr } => write!(f, "unsupported csr {csr:#x} at pc {pc:#010x}"),
            Trap::FetchFault { pc } => write!(f, "fetch fault at pc {pc:#010x}"),
            Trap::LoadFault { pc, addr } => write!(f, "load fault at {addr:#010x} (pc {pc:#010x})"),
            Trap::StoreFault { pc, addr } => {
                write!(f, "store fault at {addr:#010x} (pc {pc:#010x})")
            }
            Trap::Ecall { pc } => write!(f, "ecall at pc {pc:#010x}"),
            Trap::Ebreak { pc } => write!(f, "ebreak at pc {pc:#010x}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HaltReason {
    Trap(Trap),
    /// Halted by the host after the guest's `exit` syscall.
    Exit(i32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RunState {
    HeldInReset,
    Running,
    Halted(HaltReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartOutcome {
    Started,
    /// The core was not held in reset; the interrupt only bumps a counter.
    Ignored,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("core is not running")]
pub struct NotRunning;

/// What one call to [`CoreState::step`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepResult {
    pub pc: u32,
    pub instruction: Option<Instruction>,
    pub fetch_latency: u64,
    pub exec_cycles: u64,
    pub data_latency: u64,
    pub trap: Option<Trap>,
}

impl StepResult {
    pub fn cycles(&self) -> u64 {
        self.fetch_latency + self.exec_cycles + self.data_latency
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreState {
    pub pc: u32,
    regs: [u32; 32],
    /// Cycles since the core left reset; the `cycle`/`cycleh` CSR source.
    pub cycle_counter: u64,
    pub run_state: RunState,
    pub reset_vector: u32,
    /// Global cycle at which the core left reset.
    pub time_base: u64,
    pub retired: u64,
    pub ignored_starts: u64,
}

impl CoreState {
    pub fn new(reset_vector: u32) -> CoreState {
        CoreState {
            pc: reset_vector,
            regs: [0; 32],
            cycle_counter: 0,
            run_state: RunState::HeldInReset,
            reset_vector,
            time_base: 0,
            retired: 0,
            ignored_starts: 0,
        }
    }

    /// A core already out of reset, for driving the interpreter directly.
    pub fn running(reset_vector: u32) -> CoreState {
        let mut core = CoreState::new(reset_vector);
        core.run_state = RunState::Running;
        core
    }

    pub fn reg(&self, r: Reg) -> u32 {
        self.regs[r.index()]
    }

    pub fn set_reg(&mut self, r: Reg, value: u32) {
        if r != Reg::ZERO {
            self.regs[r.index()] = value;
        }
    }

    pub fn regs(&self) -> &[u32; 32] {
        &self.regs
    }

    /// Global time of the core's next action.
    pub fn now(&self) -> u64 {
        self.time_base + self.cycle_counter
    }

    pub fn deliver_start_interrupt(&mut self) -> StartOutcome {
        match self.run_state {
            RunState::HeldInReset => {
                self.run_state = RunState::Running;
                self.pc = self.reset_vector;
                StartOutcome::Started
            }
            _ => {
                self.ignored_starts += 1;
                StartOutcome::Ignored
            }
        }
    }

    /// Executes exactly one instruction.
    pub fn step(
        &mut self,
        timing: &InstructionTimingTable,
        mem: &mut dyn MemoryPort,
    ) -> Result<StepResult, NotRunning> {
        if self.run_state != RunState::Running {
            return Err(NotRunning);
        }
        let pc = self.pc;
        let mut result = StepResult {
            pc,
            instruction: None,
            fetch_latency: 0,
            exec_cycles: 0,
            data_latency: 0,
            trap: None,
        };
        if pc % 4 != 0 {
            return Ok(self.trap(result, Trap::MisalignedFetch { pc }));
        }
        let fetch = PortRequest { kind: AccessKind::InstrFetch, addr: pc, width: Width::Word, data: 0 };
        let word = match mem.access(fetch, self.now()) {
            Ok(resp) => {
                result.fetch_latency = resp.latency;
                self.cycle_counter += resp.latency;
                resp.data
            }
            Err(_) => return Ok(self.trap(result, Trap::FetchFault { pc })),
        };
        let inst = match decode_at(word, pc) {
            Ok(i) => i,
            Err(e) => {
                return Ok(self.trap(result, Trap::IllegalInstruction { pc: e.pc, word: e.word }))
            }
        };
        result.instruction = Some(inst);
        match self.execute(&inst, timing, mem, &mut result) {
            Ok(next_pc) => {
                self.pc = next_pc;
                self.retired += 1;
                Ok(result)
            }
            Err(trap) => Ok(self.trap(result, trap)),
        }
    }

    fn trap(&mut self, mut result: StepResult, trap: Trap) -> StepResult {
        self.run_state = RunState::Halted(HaltReason::Trap(trap));
        result.trap = Some(trap);
        result
    }

    fn charge(&mut self, result: &mut StepResult, exec: u32) {
        result.exec_cycles = exec as u64;
        self.cycle_counter += exec as u64;
    }

    fn execute(
        &mut self,
        inst: &Instruction,
        timing: &InstructionTimingTable,
        mem: &mut dyn MemoryPort,
        result: &mut StepResult,
    ) -> Result<u32, Trap> {
        use Mnemonic::*;
        let pc = self.pc;
        let next = pc.wrapping_add(4);
        let a = self.reg(inst.rs1);
        let b = self.reg(inst.rs2);
        let imm = inst.imm as u32;
        let class = inst.class();
        match class {
            OpClass::Load => {
                self.charge(result, timing.cycles(class, false));
                let addr = a.wrapping_add(imm);
                let width = match inst.op {
                    Lb | Lbu => Width::Byte,
                    Lh | Lhu => Width::Half,
                    _ => Width::Word,
                };
                if addr % width.bytes() != 0 {
                    return Err(Trap::MisalignedLoad { pc, addr });
                }
                let req = PortRequest { kind: AccessKind::Load, addr, width, data: 0 };
                let resp = mem.access(req, self.now()).map_err(|_| Trap::LoadFault { pc, addr })?;
                result.data_latency = resp.latency;
                self.cycle_counter += resp.latency;
                let v = match inst.op {
                    Lb => resp.data as u8 as i8 as i32 as u32,
                    Lh => resp.data as u16 as i16 as i32 as u32,
                    Lbu => resp.data & 0xff,
                    Lhu => resp.data & 0xffff,
                    _ => resp.data,
                };
                self.set_reg(inst.rd, v);
                Ok(next)
            }
            OpClass::Store => {
                self.charge(result, timing.cycles(class, false));
                let addr = a.wrapping_add(imm);
                let width = match inst.op {
                    Sb => Width::Byte,
                    Sh => Width::Half,
                    _ => Width::Word,
                };
                if addr % width.bytes() != 0 {
                    return Err(Trap::MisalignedStore { pc, addr });
                }
                let data = match width {
                    Width::Byte => b & 0xff,
                    Width::Half => b & 0xffff,
                    Width::Word => b,
                };
                let req = PortRequest { kind: AccessKind::Store, addr, width, data };
                let resp = mem.access(req, self.now()).map_err(|_| Trap::StoreFault { pc, addr })?;
                result.data_latency = resp.latency;
                self.cycle_counter += resp.latency;
                Ok(next)
            }
            OpClass::Branch => {
                let taken = match inst.op {
                    Beq => a == b,
                    Bne => a != b,
                    Blt => (a as i32) < (b as i32),
                    Bge => (a as i32) >= (b as i32),
                    Bltu => a < b,
                    _ => a >= b,
                };
                self.charge(result, timing.cycles(class, taken));
                Ok(if taken { pc.wrapping_add(imm) } else { next })
            }
            OpClass::Jal => {
                self.charge(result, timing.cycles(class, true));
                self.set_reg(inst.rd, next);
                Ok(pc.wrapping_add(imm))
            }
            OpClass::Jalr => {
                self.charge(result, timing.cycles(class, true));
                let target = a.wrapping_add(imm) & !1;
                self.set_reg(inst.rd, next);
                Ok(target)
            }
            OpClass::System => {
                self.charge(result, timing.cycles(class, false));
                match inst.op {
                    Ecall => Err(Trap::Ecall { pc }),
                    Ebreak => Err(Trap::Ebreak { pc }),
                    op => {
                        // Only reads of the cycle counter exist; any write traps.
                        let writes = match op {
                            Csrrw | Csrrwi => true,
                            _ => inst.rs1 != Reg::ZERO,
                        };
                        if writes {
                            return Err(Trap::IllegalCsr { pc, csr: inst.csr });
                        }
                        let v = read_csr(self, inst.csr).map_err(|_| Trap::IllegalCsr { pc, csr: inst.csr })?;
                        self.set_reg(inst.rd, v);
                        Ok(next)
                    }
                }
            }
            // The core is serial and the fabric coherent; rd and rs1 of a
            // fence are reserved and ignored.
            OpClass::Fence => {
                self.charge(result, timing.cycles(class, false));
                Ok(next)
            }
            _ => {
                self.charge(result, timing.cycles(class, false));
                let v = alu(inst, pc, a, b);
                self.set_reg(inst.rd, v);
                Ok(next)
            }
        }
    }
}

fn alu(inst: &Instruction, pc: u32, a: u32, b: u32) -> u32 {
    use Mnemonic::*;
    let imm = inst.imm as u32;
    let shamt = |x: u32| x & 0x1f;
    match inst.op {
        Lui => imm,
        Auipc => pc.wrapping_add(imm),
        Addi => a.wrapping_add(imm),
        Slti => ((a as i32) < inst.imm) as u32,
        Sltiu => (a < imm) as u32,
        Xori => a ^ imm,
        Ori => a | imm,
        Andi => a & imm,
        Slli => a << shamt(imm),
        Srli => a >> shamt(imm),
        Srai => ((a as i32) >> shamt(imm)) as u32,
        Add => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Sll => a << shamt(b),
        Slt => ((a as i32) < (b as i32)) as u32,
        Sltu => (a < b) as u32,
        Xor => a ^ b,
        Srl => a >> shamt(b),
        Sra => ((a as i32) >> shamt(b)) as u32,
        Or => a | b,
        And => a & b,
        op => unreachable!("{} is not an ALU op", op.name()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("unsupported csr {0:#x}")]
pub struct UnsupportedCsr(pub u16);

/// Reads the low or high half of the cycle counter.
pub fn read_csr(state: &CoreState, csr: u16) -> Result<u32, UnsupportedCsr> {
    match csr {
        CSR_CYCLE => Ok(state.cycle_counter as u32),
        CSR_CYCLEH => Ok((state.cycle_counter >> 32) as u32),
        other => Err(UnsupportedCsr(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::Asm;

    const BASE: u32 = 0x1_0000;

    fn run(build: impl FnOnce(&mut Asm), steps: usize) -> (CoreState, FlatMemory, Vec<StepResult>) {
        let mut a = Asm::new(BASE);
        build(&mut a);
        let prog = a.finish().unwrap();
        let mut mem = FlatMemory::new(BASE, 0x1_0000, 4);
        mem.load_bytes(BASE, &prog.bytes).unwrap();
        let mut core = CoreState::running(BASE);
        let timing = InstructionTimingTable::default();
        let results = (0..steps).map(|_| core.step(&timing, &mut mem).unwrap()).collect();
        (core, mem, results)
    }

    #[test]
    fn addi_sets_register() {
        let (core, _, _) = run(|a| { a.addi(Reg::RA, Reg::ZERO, 10); }, 1);
        assert_eq!(core.reg(Reg::RA), 10);
    }

    #[test]
    fn add_wraps() {
        let (core, _, _) = run(
            |a| {
                a.li(Reg::T0, -1).addi(Reg::T1, Reg::ZERO, 1).add(Reg::T2, Reg::T0, Reg::T1);
            },
            3,
        );
        assert_eq!(core.reg(Reg::T2), 0);
    }

    #[test]
    fn writes_to_x0_are_discarded() {
        let (core, _, _) = run(|a| { a.addi(Reg::ZERO, Reg::ZERO, 5); }, 1);
        assert_eq!(core.reg(Reg::ZERO), 0);
    }

    #[test]
    fn load_costs_five_cycles_plus_memory() {
        let (_, _, r) = run(|a| { a.lw(Reg::T0, 0x100, Reg::ZERO); }, 1);
        // address 0x100 is outside FlatMemory: use a mapped address instead
        assert!(r[0].trap.is_some());
        let (core, _, r) = run(
            |a| {
                a.li(Reg::A1, (BASE + 0x1000) as i32).lw(Reg::T0, 0, Reg::A1);
            },
            2,
        );
        assert_eq!(r[1].exec_cycles, 5);
        assert_eq!(r[1].fetch_latency, 4);
        assert_eq!(r[1].data_latency, 4);
        assert_eq!(r[1].cycles(), 13);
        assert_eq!(core.cycle_counter, r.iter().map(StepResult::cycles).sum::<u64>());
    }

    #[test]
    fn rdcycle_brackets_a_load() {
        let (core, _, _) = run(
            |a| {
                a.li(Reg::A1, (BASE + 0x1000) as i32)
                    .rdcycle(Reg::A0)
                    .lw(Reg::T0, 0, Reg::A1)
                    .rdcycle(Reg::A2);
            },
            4,
        );
        // 4 (load fetch) + 5 (execute) + 4 (data) + 4 (second rdcycle fetch)
        assert_eq!(core.reg(Reg::A2) - core.reg(Reg::A0), 17);
    }

    #[test]
    fn csr_reads_at_start() {
        let core = CoreState::new(BASE);
        assert_eq!(read_csr(&core, CSR_CYCLE), Ok(0));
        assert_eq!(read_csr(&core, CSR_CYCLEH), Ok(0));
        assert_eq!(read_csr(&core, 0x300), Err(UnsupportedCsr(0x300)));
    }

    #[test]
    fn cycleh_reports_high_half() {
        let mut core = CoreState::new(BASE);
        core.cycle_counter = 0x2_0000_0005;
        assert_eq!(read_csr(&core, CSR_CYCLEH), Ok(2));
        assert_eq!(read_csr(&core, CSR_CYCLE), Ok(5));
    }

    #[test]
    fn other_csrs_trap() {
        let (core, _, r) = run(|a| { a.csrrs(Reg::A0, 0xc01, Reg::ZERO); }, 1);
        assert_eq!(r[0].trap, Some(Trap::IllegalCsr { pc: BASE, csr: 0xc01 }));
        assert!(matches!(core.run_state, RunState::Halted(HaltReason::Trap(_))));
        let (_, _, r) = run(|a| { a.csrrs(Reg::A0, CSR_CYCLE, Reg::T0); }, 1);
        assert!(matches!(r[0].trap, Some(Trap::IllegalCsr { .. })));
    }

    #[test]
    fn held_in_reset_until_interrupt() {
        let mut core = CoreState::new(BASE);
        let mut mem = FlatMemory::new(BASE, 64, 1);
        let timing = InstructionTimingTable::default();
        assert_eq!(core.step(&timing, &mut mem), Err(NotRunning));
        assert_eq!(core.retired, 0);
        assert_eq!(core.deliver_start_interrupt(), StartOutcome::Started);
        assert_eq!(core.run_state, RunState::Running);
        assert_eq!(core.pc, BASE);
        assert_eq!(core.deliver_start_interrupt(), StartOutcome::Ignored);
        assert_eq!(core.ignored_starts, 1);
    }

    #[test]
    fn misaligned_accesses_trap() {
        let (_, _, r) = run(
            |a| {
                a.li(Reg::A1, (BASE + 0x1000) as i32).lw(Reg::T0, 2, Reg::A1);
            },
            2,
        );
        assert_eq!(r[1].trap, Some(Trap::MisalignedLoad { pc: BASE + 4, addr: BASE + 0x1002 }));
        let (_, _, r) = run(
            |a| {
                a.li(Reg::A1, (BASE + 0x1000) as i32).store(Mnemonic::Sh, Reg::T0, 1, Reg::A1);
            },
            2,
        );
        assert!(matches!(r[1].trap, Some(Trap::MisalignedStore { .. })));
        let (core, _, r) = run(
            |a| {
                a.li(Reg::A1, (BASE + 0x1000) as i32).op_imm(Mnemonic::Jalr, Reg::ZERO, Reg::A1, 2);
            },
            3,
        );
        assert_eq!(r[2].trap, Some(Trap::MisalignedFetch { pc: BASE + 0x1002 }));
        assert!(matches!(core.run_state, RunState::Halted(_)));
    }

    #[test]
    fn ecall_and_ebreak_halt() {
        let (core, _, r) = run(|a| { a.ebreak(); }, 1);
        assert_eq!(r[0].trap, Some(Trap::Ebreak { pc: BASE }));
        assert_eq!(core.run_state, RunState::Halted(HaltReason::Trap(Trap::Ebreak { pc: BASE })));
    }

    #[test]
    fn timing_table_rejects_zero_entries() {
        let mut t = InstructionTimingTable::default();
        assert!(t.validate().is_ok());
        t.branch_taken = 0;
        assert_eq!(t.validate(), Err(TimingTableError("branch_taken")));
    }
}
