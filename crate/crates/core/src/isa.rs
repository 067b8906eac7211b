//! RV32I instruction decoding.
//!
//! Only the base integer ISA is accepted, plus the Zicsr forms needed to read
//! the cycle counter. Compressed, M, A, F and privileged encodings are all
//! rejected with a [`DecodeError`].

use std::fmt;

use thiserror::Error;

/// An integer register index, always `< 32`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const RA: Reg = Reg(1);
    pub const SP: Reg = Reg(2);
    pub const T0: Reg = Reg(5);
    pub const T1: Reg = Reg(6);
    pub const T2: Reg = Reg(7);
    pub const S0: Reg = Reg(8);
    pub const S1: Reg = Reg(9);
    pub const A0: Reg = Reg(10);
    pub const A1: Reg = Reg(11);
    pub const A2: Reg = Reg(12);
    pub const A3: Reg = Reg(13);
    pub const A4: Reg = Reg(14);
    pub const A5: Reg = Reg(15);
    pub const A6: Reg = Reg(16);
    pub const A7: Reg = Reg(17);
    pub const S2: Reg = Reg(18);
    pub const S3: Reg = Reg(19);
    pub const S4: Reg = Reg(20);
    pub const T3: Reg = Reg(28);
    pub const T4: Reg = Reg(29);

    /// Panics if `index >= 32`.
    pub const fn new(index: u8) -> Reg {
        assert!(index < 32, "register index out of range");
        Reg(index)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    fn field(word: u32, lsb: u32) -> Reg {
        Reg(((word >> lsb) & 0x1f) as u8)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// The RV32I opcode classes. Timing is configured per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpClass {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Branch,
    Load,
    Store,
    OpImm,
    Op,
    Fence,
    System,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mnemonic {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Fence,
    Ecall,
    Ebreak,
    Csrrw,
    Csrrs,
    Csrrc,
    Csrrwi,
    Csrrsi,
    Csrrci,
}

impl Mnemonic {
    pub fn class(self) -> OpClass {
        use Mnemonic::*;
        match self {
            Lui => OpClass::Lui,
            Auipc => OpClass::Auipc,
            Jal => OpClass::Jal,
            Jalr => OpClass::Jalr,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => OpClass::Branch,
            Lb | Lh | Lw | Lbu | Lhu => OpClass::Load,
            Sb | Sh | Sw => OpClass::Store,
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => OpClass::OpImm,
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => OpClass::Op,
            Fence => OpClass::Fence,
            Ecall | Ebreak | Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => OpClass::System,
        }
    }

    pub fn name(self) -> &'static str {
        use Mnemonic::*;
        match self {
            Lui => "lui",
            Auipc => "auipc",
            Jal => "jal",
            Jalr => "jalr",
            Beq => "beq",
            Bne => "bne",
            Blt => "blt",
            Bge => "bge",
            Bltu => "bltu",
            Bgeu => "bgeu",
            Lb => "lb",
            Lh => "lh",
            Lw => "lw",
            Lbu => "lbu",
            Lhu => "lhu",
            Sb => "sb",
            Sh => "sh",
            Sw => "sw",
            Addi => "addi",
            Slti => "slti",
            Sltiu => "sltiu",
            Xori => "xori",
            Ori => "ori",
            Andi => "andi",
            Slli => "slli",
            Srli => "srli",
            Srai => "srai",
            Add => "add",
            Sub => "sub",
            Sll => "sll",
            Slt => "slt",
            Sltu => "sltu",
            Xor => "xor",
            Srl => "srl",
            Sra => "sra",
            Or => "or",
            And => "and",
            Fence => "fence",
            Ecall => "ecall",
            Ebreak => "ebreak",
            Csrrw => "csrrw",
            Csrrs => "csrrs",
            Csrrc => "csrrc",
            Csrrwi => "csrrwi",
            Csrrsi => "csrrsi",
            Csrrci => "csrrci",
        }
    }

    pub fn from_name(name: &str) -> Option<Mnemonic> {
        ALL_MNEMONICS.iter().copied().find(|m| m.name() == name)
    }
}

pub const ALL_MNEMONICS: [Mnemonic; 46] = {
    use Mnemonic::*;
    [
        Lui, Auipc, Jal, Jalr, Beq, Bne, Blt, Bge, Bltu, Bgeu, Lb, Lh, Lw, Lbu, Lhu, Sb, Sh, Sw,
        Addi, Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai, Add, Sub, Sll, Slt, Sltu, Xor, Srl,
        Sra, Or, And, Fence, Ecall, Ebreak, Csrrw, Csrrs, Csrrc, Csrrwi, Csrrsi, Csrrci,
    ]
};

/// A decoded instruction.
///
/// Fields not present in the instruction's format are zero. For shifts `imm`
/// is the shift amount; for the immediate CSR forms `rs1` holds the raw
/// 5-bit field and `imm` the zero-extended value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Mnemonic,
    pub rd: Reg,
    pub rs1: Reg,
    pub rs2: Reg,
    pub imm: i32,
    pub csr: u16,
    pub raw: u32,
}

impl Instruction {
    pub fn class(&self) -> OpClass {
        self.op.class()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("illegal or unsupported instruction {word:#010x} at pc {pc:#010x}")]
pub struct DecodeError {
    pub word: u32,
    pub pc: u32,
}

pub const CSR_CYCLE: u16 = 0xc00;
pub const CSR_CYCLEH: u16 = 0xc80;

fn sext(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn imm_i(w: u32) -> i32 {
    (w as i32) >> 20
}

fn imm_s(w: u32) -> i32 {
    sext(((w >> 25) << 5) | ((w >> 7) & 0x1f), 12)
}

fn imm_b(w: u32) -> i32 {
    let v = ((w >> 31) & 1) << 12
        | ((w >> 7) & 1) << 11
        | ((w >> 25) & 0x3f) << 5
        | ((w >> 8) & 0xf) << 1;
    sext(v, 13)
}

fn imm_u(w: u32) -> i32 {
    (w & 0xffff_f000) as i32
}

fn imm_j(w: u32) -> i32 {
    let v = ((w >> 31) & 1) << 20
        | ((w >> 12) & 0xff) << 12
        | ((w >> 20) & 1) << 11
        | ((w >> 21) & 0x3ff) << 1;
    sext(v, 21)
}

pub fn decode(word: u32) -> Result<Instruction, DecodeError> {
    decode_at(word, 0)
}

/// Decodes `word`, attributing any error to `pc`.
pub fn decode_at(word: u32, pc: u32) -> Result<Instruction, DecodeError> {
    use Mnemonic::*;
    let err = DecodeError { word, pc };
    if word & 0b11 != 0b11 {
        return Err(err);
    }
    let opcode = word & 0x7f;
    let funct3 = (word >> 12) & 0x7;
    let funct7 = word >> 25;
    let rd = Reg::field(word, 7);
    let rs1 = Reg::field(word, 15);
    let rs2 = Reg::field(word, 20);
    let mut inst = Instruction {
        op: Addi,
        rd: Reg::ZERO,
        rs1: Reg::ZERO,
        rs2: Reg::ZERO,
        imm: 0,
        csr: 0,
        raw: word,
    };
    match opcode {
        0b011_0111 | 0b001_0111 => {
            inst.op = if opcode == 0b011_0111 { Lui } else { Auipc };
            inst.rd = rd;
            inst.imm = imm_u(word);
        }
        0b110_1111 => {
            inst.op = Jal;
            inst.rd = rd;
            inst.imm = imm_j(word);
        }
        0b110_0111 => {
            if funct3 != 0 {
                return Err(err);
            }
            inst.op = Jalr;
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.imm = imm_i(word);
        }
        0b110_0011 => {
            inst.op = match funct3 {
                0 => Beq,
                1 => Bne,
                4 => Blt,
                5 => Bge,
                6 => Bltu,
                7 => Bgeu,
                _ => return Err(err),
            };
            inst.rs1 = rs1;
            inst.rs2 = rs2;
            inst.imm = imm_b(word);
        }
        0b000_0011 => {
            inst.op = match funct3 {
                0 => Lb,
                1 => Lh,
                2 => Lw,
                4 => Lbu,
                5 => Lhu,
                _ => return Err(err),
            };
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.imm = imm_i(word);
        }
        0b010_0011 => {
            inst.op = match funct3 {
                0 => Sb,
                1 => Sh,
                2 => Sw,
                _ => return Err(err),
            };
            inst.rs1 = rs1;
            inst.rs2 = rs2;
            inst.imm = imm_s(word);
        }
        0b001_0011 => {
            inst.rd = rd;
            inst.rs1 = rs1;
            match funct3 {
                1 | 5 => {
                    let shamt = ((word >> 20) & 0x1f) as i32;
                    inst.op = match (funct3, funct7) {
                        (1, 0) => Slli,
                        (5, 0) => Srli,
                        (5, 0x20) => Srai,
                        _ => return Err(err),
                    };
                    inst.imm = shamt;
                }
                _ => {
                    inst.op = match funct3 {
                        0 => Addi,
                        2 => Slti,
                        3 => Sltiu,
                        4 => Xori,
                        6 => Ori,
                        _ => Andi,
                    };
                    inst.imm = imm_i(word);
                }
            }
        }
        0b011_0011 => {
            inst.op = match (funct7, funct3) {
                (0, 0) => Add,
                (0x20, 0) => Sub,
                (0, 1) => Sll,
                (0, 2) => Slt,
                (0, 3) => Sltu,
                (0, 4) => Xor,
                (0, 5) => Srl,
                (0x20, 5) => Sra,
                (0, 6) => Or,
                (0, 7) => And,
                _ => return Err(err),
            };
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.rs2 = rs2;
        }
        0b000_1111 => {
            // FENCE.I (funct3 = 1) belongs to Zifencei, not the base ISA.
            if funct3 != 0 {
                return Err(err);
            }
            inst.op = Fence;
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.imm = imm_i(word);
        }
        0b111_0011 => {
            let csr = (word >> 20) as u16;
            match funct3 {
                0 => {
                    if rd != Reg::ZERO || rs1 != Reg::ZERO {
                        return Err(err);
                    }
                    inst.op = match csr {
                        0 => Ecall,
                        1 => Ebreak,
                        _ => return Err(err),
                    };
                    inst.imm = csr as i32;
                }
                4 => return Err(err),
                _ => {
                    inst.op = match funct3 {
                        1 => Csrrw,
                        2 => Csrrs,
                        3 => Csrrc,
                        5 => Csrrwi,
                        6 => Csrrsi,
                        _ => Csrrci,
                    };
                    inst.rd = rd;
                    inst.rs1 = rs1;
                    inst.csr = csr;
                    if funct3 >= 5 {
                        inst.imm = rs1.index() as i32;
                    }
                }
            }
        }
        _ => return Err(err),
    }
    Ok(inst)
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.op.name();
        match self.class() {
            OpClass::Lui | OpClass::Auipc => {
                write!(f, "{n} {}, {:#x}", self.rd, (self.imm as u32) >> 12)
            }
            OpClass::Jal => write!(f, "{n} {}, {}", self.rd, self.imm),
            OpClass::Jalr | OpClass::Load => {
                write!(f, "{n} {}, {}({})", self.rd, self.imm, self.rs1)
            }
            OpClass::Branch => write!(f, "{n} {}, {}, {}", self.rs1, self.rs2, self.imm),
            OpClass::Store => write!(f, "{n} {}, {}({})", self.rs2, self.imm, self.rs1),
            OpClass::OpImm => write!(f, "{n} {}, {}, {}", self.rd, self.rs1, self.imm),
            OpClass::Op => write!(f, "{n} {}, {}, {}", self.rd, self.rs1, self.rs2),
            OpClass::Fence => write!(f, "{n} {:#x}", self.imm & 0xff),
            OpClass::System => match self.op {
                Mnemonic::Ecall | Mnemonic::Ebreak => f.write_str(n),
                Mnemonic::Csrrwi | Mnemonic::Csrrsi | Mnemonic::Csrrci => {
                    write!(f, "{n} {}, {:#x}, {}", self.rd, self.csr, self.imm)
                }
                _ => write!(f, "{n} {}, {:#x}, {}", self.rd, self.csr, self.rs1),
            },
        }
    }
}
