//! A small RV32I assembler for programs built inside the simulator: the
//! latency probe, the syscall fuzz program, and test fixtures.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::isa::{Instruction, Mnemonic, OpClass, Reg};

/// Encodes a decoded instruction back into its 32-bit word.
///
/// `raw` is ignored; every other field must be in range for the format.
pub fn encode(inst: &Instruction) -> u32 {
    use Mnemonic::*;
    let rd = inst.rd.index() as u32;
    let rs1 = inst.rs1.index() as u32;
    let rs2 = inst.rs2.index() as u32;
    let imm = inst.imm as u32;
    let (opcode, funct3, funct7) = match inst.op {
        Lui => (0x37, 0, 0),
        Auipc => (0x17, 0, 0),
        Jal => (0x6f, 0, 0),
        Jalr => (0x67, 0, 0),
        Beq => (0x63, 0, 0),
        Bne => (0x63, 1, 0),
        Blt => (0x63, 4, 0),
        Bge => (0x63, 5, 0),
        Bltu => (0x63, 6, 0),
        Bgeu => (0x63, 7, 0),
        Lb => (0x03, 0, 0),
        Lh => (0x03, 1, 0),
        Lw => (0x03, 2, 0),
        Lbu => (0x03, 4, 0),
        Lhu => (0x03, 5, 0),
        Sb => (0x23, 0, 0),
        Sh => (0x23, 1, 0),
        Sw => (0x23, 2, 0),
        Addi => (0x13, 0, 0),
        Slti => (0x13, 2, 0),
        Sltiu => (0x13, 3, 0),
        Xori => (0x13, 4, 0),
        Ori => (0x13, 6, 0),
        Andi => (0x13, 7, 0),
        Slli => (0x13, 1, 0),
        Srli => (0x13, 5, 0),
        Srai => (0x13, 5, 0x20),
        Add => (0x33, 0, 0),
        Sub => (0x33, 0, 0x20),
        Sll => (0x33, 1, 0),
        Slt => (0x33, 2, 0),
        Sltu => (0x33, 3, 0),
        Xor => (0x33, 4, 0),
        Srl => (0x33, 5, 0),
        Sra => (0x33, 5, 0x20),
        Or => (0x33, 6, 0),
        And => (0x33, 7, 0),
        Fence => (0x0f, 0, 0),
        Ecall | Ebreak => (0x73, 0, 0),
        Csrrw => (0x73, 1, 0),
        Csrrs => (0x73, 2, 0),
        Csrrc => (0x73, 3, 0),
        Csrrwi => (0x73, 5, 0),
        Csrrsi => (0x73, 6, 0),
        Csrrci => (0x73, 7, 0),
    };
    match inst.class() {
        OpClass::Lui | OpClass::Auipc => (imm & 0xffff_f000) | rd << 7 | opcode,
        OpClass::Jal => {
            let j = (imm >> 20 & 1) << 31
                | (imm >> 1 & 0x3ff) << 21
                | (imm >> 11 & 1) << 20
                | (imm >> 12 & 0xff) << 12;
            j | rd << 7 | opcode
        }
        OpClass::Branch => {
            let b = (imm >> 12 & 1) << 31
                | (imm >> 5 & 0x3f) << 25
                | (imm >> 1 & 0xf) << 8
                | (imm >> 11 & 1) << 7;
            b | rs2 << 20 | rs1 << 15 | funct3 << 12 | opcode
        }
        OpClass::Store => {
            (imm >> 5 & 0x7f) << 25
                | rs2 << 20
                | rs1 << 15
                | funct3 << 12
                | (imm & 0x1f) << 7
                | opcode
        }
        OpClass::Op => funct7 << 25 | rs2 << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode,
        OpClass::OpImm if matches!(inst.op, Slli | Srli | Srai) => {
            funct7 << 25 | (imm & 0x1f) << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
        }
        OpClass::System if !matches!(inst.op, Ecall | Ebreak) => {
            (inst.csr as u32) << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
        }
        // I-type: JALR, loads, ALU immediates, FENCE, ECALL/EBREAK
        _ => (imm & 0xfff) << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode,
    }
}

fn inst(op: Mnemonic, rd: Reg, rs1: Reg, rs2: Reg, imm: i32) -> Instruction {
    Instruction { op, rd, rs1, rs2, imm, csr: 0, raw: 0 }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("branch to `{label}` out of range ({offset} bytes)")]
    OutOfRange { label: String, offset: i64 },
}

#[derive(Clone, Copy, Debug)]
enum FixupKind {
    Branch,
    Jal,
    /// `lui` + `addi` pair loading an absolute address.
    HiLo,
}

#[derive(Clone, Debug)]
struct Fixup {
    at: usize,
    label: String,
    kind: FixupKind,
}

/// Assembled flat image: bytes starting at `base` plus label addresses.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub base: u32,
    pub bytes: Vec<u8>,
    pub symbols: BTreeMap<String, u32>,
}

/// Builds a flat little-endian program image at a fixed base address.
#[derive(Clone, Debug)]
pub struct Asm {
    base: u32,
    bytes: Vec<u8>,
    labels: BTreeMap<String, u32>,
    fixups: Vec<Fixup>,
    duplicate: Option<String>,
}

impl Asm {
    pub fn new(base: u32) -> Asm {
        Asm { base, bytes: Vec::new(), labels: BTreeMap::new(), fixups: Vec::new(), duplicate: None }
    }

    pub fn here(&self) -> u32 {
        self.base + self.bytes.len() as u32
    }

    pub fn label(&mut self, name: &str) -> &mut Self {
        let here = self.here();
        if self.labels.insert(name.to_string(), here).is_some() && self.duplicate.is_none() {
            self.duplicate = Some(name.to_string());
        }
        self
    }

    pub fn emit(&mut self, word: u32) -> &mut Self {
        self.bytes.extend_from_slice(&word.to_le_bytes());
        self
    }

    pub fn inst(&mut self, i: Instruction) -> &mut Self {
        self.emit(encode(&i))
    }

    pub fn word(&mut self, value: u32) -> &mut Self {
        self.emit(value)
    }

    pub fn space(&mut self, len: usize) -> &mut Self {
        self.bytes.resize(self.bytes.len() + len, 0);
        self
    }

    /// Pads with zero bytes (or NOPs when word aligned) to a multiple of `align`.
    pub fn align(&mut self, align: u32) -> &mut Self {
        while self.here() % align != 0 {
            if self.here() % 4 == 0 && align % 4 == 0 {
                self.nop();
            } else {
                self.bytes.push(0);
            }
        }
        self
    }

    pub fn nop(&mut self) -> &mut Self {
        self.addi(Reg::ZERO, Reg::ZERO, 0)
    }

    pub fn op(&mut self, op: Mnemonic, rd: Reg, rs1: Reg, rs2: Reg) -> &mut Self {
        self.inst(inst(op, rd, rs1, rs2, 0))
    }

    pub fn op_imm(&mut self, op: Mnemonic, rd: Reg, rs1: Reg, imm: i32) -> &mut Self {
        self.inst(inst(op, rd, rs1, Reg::ZERO, imm))
    }

    pub fn addi(&mut self, rd: Reg, rs1: Reg, imm: i32) -> &mut Self {
        self.op_imm(Mnemonic::Addi, rd, rs1, imm)
    }

    pub fn add(&mut self, rd: Reg, rs1: Reg, rs2: Reg) -> &mut Self {
        self.op(Mnemonic::Add, rd, rs1, rs2)
    }

    pub fn sub(&mut self, rd: Reg, rs1: Reg, rs2: Reg) -> &mut Self {
        self.op(Mnemonic::Sub, rd, rs1, rs2)
    }

    pub fn slli(&mut self, rd: Reg, rs1: Reg, shamt: i32) -> &mut Self {
        self.op_imm(Mnemonic::Slli, rd, rs1, shamt)
    }

    pub fn mv(&mut self, rd: Reg, rs: Reg) -> &mut Self {
        self.addi(rd, rs, 0)
    }

    pub fn lui(&mut self, rd: Reg, imm: i32) -> &mut Self {
        self.inst(inst(Mnemonic::Lui, rd, Reg::ZERO, Reg::ZERO, imm & !0xfff))
    }

    /// Loads an arbitrary 32-bit constant with `lui`/`addi`.
    pub fn li(&mut self, rd: Reg, value: i32) -> &mut Self {
        if (-2048..2048).contains(&value) {
            return self.addi(rd, Reg::ZERO, value);
        }
        let (hi, lo) = split_hi_lo(value as u32);
        self.lui(rd, hi as i32);
        if lo != 0 {
            self.addi(rd, rd, lo);
        }
        self
    }

    /// Loads the absolute address of `label` (always two instructions).
    pub fn la(&mut self, rd: Reg, label: &str) -> &mut Self {
        let at = self.bytes.len();
        self.fixups.push(Fixup { at, label: label.to_string(), kind: FixupKind::HiLo });
        self.lui(rd, 0);
        self.addi(rd, rd, 0)
    }

    pub fn load(&mut self, op: Mnemonic, rd: Reg, offset: i32, base: Reg) -> &mut Self {
        self.inst(inst(op, rd, base, Reg::ZERO, offset))
    }

    pub fn store(&mut self, op: Mnemonic, src: Reg, offset: i32, base: Reg) -> &mut Self {
        self.inst(inst(op, Reg::ZERO, base, src, offset))
    }

    pub fn lw(&mut self, rd: Reg, offset: i32, base: Reg) -> &mut Self {
        self.load(Mnemonic::Lw, rd, offset, base)
    }

    pub fn sw(&mut self, src: Reg, offset: i32, base: Reg) -> &mut Self {
        self.store(Mnemonic::Sw, src, offset, base)
    }

    pub fn branch(&mut self, op: Mnemonic, rs1: Reg, rs2: Reg, label: &str) -> &mut Self {
        let at = self.bytes.len();
        self.fixups.push(Fixup { at, label: label.to_string(), kind: FixupKind::Branch });
        self.inst(inst(op, Reg::ZERO, rs1, rs2, 0))
    }

    pub fn beq(&mut self, rs1: Reg, rs2: Reg, label: &str) -> &mut Self {
        self.branch(Mnemonic::Beq, rs1, rs2, label)
    }

    pub fn bne(&mut self, rs1: Reg, rs2: Reg, label: &str) -> &mut Self {
        self.branch(Mnemonic::Bne, rs1, rs2, label)
    }

    pub fn jal(&mut self, rd: Reg, label: &str) -> &mut Self {
        let at = self.bytes.len();
        self.fixups.push(Fixup { at, label: label.to_string(), kind: FixupKind::Jal });
        self.inst(inst(Mnemonic::Jal, rd, Reg::ZERO, Reg::ZERO, 0))
    }

    pub fn j(&mut self, label: &str) -> &mut Self {
        self.jal(Reg::ZERO, label)
    }

    pub fn call(&mut self, label: &str) -> &mut Self {
        self.jal(Reg::RA, label)
    }

    pub fn ret(&mut self) -> &mut Self {
        self.inst(inst(Mnemonic::Jalr, Reg::ZERO, Reg::RA, Reg::ZERO, 0))
    }

    pub fn fence(&mut self) -> &mut Self {
        // fence iorw, iorw
        self.inst(inst(Mnemonic::Fence, Reg::ZERO, Reg::ZERO, Reg::ZERO, 0xff))
    }

    pub fn csrrs(&mut self, rd: Reg, csr: u16, rs1: Reg) -> &mut Self {
        self.inst(Instruction { csr, ..inst(Mnemonic::Csrrs, rd, rs1, Reg::ZERO, 0) })
    }

    pub fn rdcycle(&mut self, rd: Reg) -> &mut Self {
        self.csrrs(rd, crate::isa::CSR_CYCLE, Reg::ZERO)
    }

    pub fn rdcycleh(&mut self, rd: Reg) -> &mut Self {
        self.csrrs(rd, crate::isa::CSR_CYCLEH, Reg::ZERO)
    }

    pub fn ebreak(&mut self) -> &mut Self {
        self.inst(Instruction { imm: 1, ..inst(Mnemonic::Ebreak, Reg::ZERO, Reg::ZERO, Reg::ZERO, 1) })
    }

    /// Resolves label fixups and returns the image.
    pub fn finish(mut self) -> Result<Assembled, AsmError> {
        if let Some(name) = self.duplicate.take() {
            return Err(AsmError::DuplicateLabel(name));
        }
        for fixup in std::mem::take(&mut self.fixups) {
            let target = *self
                .labels
                .get(&fixup.label)
                .ok_or_else(|| AsmError::UndefinedLabel(fixup.label.clone()))?;
            let pc = self.base + fixup.at as u32;
            let offset = target as i64 - pc as i64;
            let read = |bytes: &[u8], at: usize| {
                u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
            };
            let patch = |bytes: &mut Vec<u8>, at: usize, word: u32| {
                bytes[at..at + 4].copy_from_slice(&word.to_le_bytes())
            };
            let range_err = || AsmError::OutOfRange { label: fixup.label.clone(), offset };
            match fixup.kind {
                FixupKind::Branch | FixupKind::Jal => {
                    let limit = if matches!(fixup.kind, FixupKind::Branch) { 1 << 12 } else { 1 << 20 };
                    if offset < -limit || offset >= limit || offset % 2 != 0 {
                        return Err(range_err());
                    }
                    let mut i = crate::isa::decode(read(&self.bytes, fixup.at)).expect("own encoding");
                    i.imm = offset as i32;
                    patch(&mut self.bytes, fixup.at, encode(&i));
                }
                FixupKind::HiLo => {
                    let (hi, lo) = split_hi_lo(target);
                    let mut lui = crate::isa::decode(read(&self.bytes, fixup.at)).expect("own encoding");
                    lui.imm = hi as i32;
                    patch(&mut self.bytes, fixup.at, encode(&lui));
                    let mut addi =
                        crate::isa::decode(read(&self.bytes, fixup.at + 4)).expect("own encoding");
                    addi.imm = lo;
                    patch(&mut self.bytes, fixup.at + 4, encode(&addi));
                }
            }
        }
        Ok(Assembled { base: self.base, bytes: self.bytes, symbols: self.labels })
    }
}

/// Splits `value` into a `lui` immediate (upper 20 bits, pre-shifted) and a
/// sign-extended 12-bit `addi` immediate.
fn split_hi_lo(value: u32) -> (u32, i32) {
    let lo = ((value & 0xfff) as i32) << 20 >> 20;
    let hi = value.wrapping_sub(lo as u32) & 0xffff_f000;
    (hi, lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode;

    #[test]
    fn encodes_known_words() {
        let mut a = Asm::new(0);
        a.nop().addi(Reg::RA, Reg::ZERO, 10).rdcycle(Reg::A0);
        let out = a.finish().unwrap();
        let words: Vec<u32> =
            out.bytes.chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(words, vec![0x0000_0013, 0x00A0_0093, 0xC000_2573]);
    }

    #[test]
    fn li_covers_sign_boundaries() {
        for value in [0, -1, 2047, 2048, -2048, -2049, 0x7fff_ffff, i32::MIN, 0x1234_5800] {
            let mut a = Asm::new(0);
            a.li(Reg::T0, value);
            let out = a.finish().unwrap();
            let mut acc = 0u32;
            for chunk in out.bytes.chunks(4) {
                let i = decode(u32::from_le_bytes(chunk.try_into().unwrap())).unwrap();
                acc = match i.op {
                    Mnemonic::Lui => i.imm as u32,
                    Mnemonic::Addi if i.rs1 == Reg::ZERO => i.imm as u32,
                    _ => acc.wrapping_add(i.imm as u32),
                };
            }
            assert_eq!(acc, value as u32, "li {value:#x}");
        }
    }

    #[test]
    fn resolves_backward_and_forward_labels() {
        let mut a = Asm::new(0x1000);
        a.label("top").nop().bne(Reg::A0, Reg::ZERO, "top").j("end").nop().label("end");
        let out = a.finish().unwrap();
        let w = |n: usize| u32::from_le_bytes(out.bytes[n * 4..n * 4 + 4].try_into().unwrap());
        assert_eq!(decode(w(1)).unwrap().imm, -4);
        assert_eq!(decode(w(2)).unwrap().imm, 8);
    }

    #[test]
    fn undefined_label_is_an_error() {
        let mut a = Asm::new(0);
        a.j("nowhere");
        assert_eq!(a.finish().unwrap_err(), AsmError::UndefinedLabel("nowhere".into()));
    }
}
