//! A from-scratch single-instruction RV32I interpreter working straight off
//! the encoding bits. It shares nothing with the simulator's decoder.

#![allow(dead_code)]

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RefTrap {
    Illegal,
    MisalignedLoad(u32),
    MisalignedStore(u32),
    LoadFault(u32),
    StoreFault(u32),
    Ecall,
    Ebreak,
    Csr,
}

#[derive(Clone, Debug)]
pub struct RefMachine {
    pub pc: u32,
    pub x: [u32; 32],
    pub mem_base: u32,
    pub mem: Vec<u8>,
    /// Cycle counter value a CSR read observes during this instruction.
    pub cycle_at_exec: u64,
}

fn bits(w: u32, hi: u32, lo: u32) -> u32 {
    (w >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

fn sign(v: u32, width: u32) -> u32 {
    if v >> (width - 1) & 1 == 1 {
        v | !((1u32 << width) - 1)
    } else {
        v
    }
}

impl RefMachine {
    fn load(&self, addr: u32, n: u32) -> Option<u32> {
        let off = addr.checked_sub(self.mem_base)? as usize;
        if off + n as usize > self.mem.len() {
            return None;
        }
        let mut v = 0u32;
        for i in (0..n as usize).rev() {
            v = (v << 8) | self.mem[off + i] as u32;
        }
        Some(v)
    }

    fn store(&mut self, addr: u32, n: u32, v: u32) -> bool {
        let Some(off) = addr.checked_sub(self.mem_base).map(|o| o as usize) else { return false };
        if off + n as usize > self.mem.len() {
            return false;
        }
        for i in 0..n as usize {
            self.mem[off + i] = (v >> (8 * i)) as u8;
        }
        true
    }

    fn wr(&mut self, rd: u32, v: u32) {
        if rd != 0 {
            self.x[rd as usize] = v;
        }
    }

    /// Executes the word at `pc`. On a trap nothing architectural changes.
    pub fn step(&mut self, w: u32) -> Result<(), RefTrap> {
        let rd = bits(w, 11, 7);
        let f3 = bits(w, 14, 12);
        let f7 = bits(w, 31, 25);
        let r1 = self.x[bits(w, 19, 15) as usize];
        let r2 = self.x[bits(w, 24, 20) as usize];
        let i_imm = sign(bits(w, 31, 20), 12);
        let s_imm = sign(bits(w, 31, 25) << 5 | bits(w, 11, 7), 12);
        let b_imm = sign(bits(w, 31, 31) << 12 | bits(w, 7, 7) << 11 | bits(w, 30, 25) << 5 | bits(w, 11, 8) << 1, 13);
        let j_imm = sign(bits(w, 31, 31) << 20 | bits(w, 19, 12) << 12 | bits(w, 20, 20) << 11 | bits(w, 30, 21) << 1, 21);
        let seq = self.pc.wrapping_add(4);
        let mut next = seq;
        match bits(w, 6, 0) {
            0x37 => self.wr(rd, w & 0xffff_f000),
            0x17 => self.wr(rd, self.pc.wrapping_add(w & 0xffff_f000)),
            0x6f => {
                self.wr(rd, seq);
                next = self.pc.wrapping_add(j_imm);
            }
            0x67 if f3 == 0 => {
                next = r1.wrapping_add(i_imm) & !1;
                self.wr(rd, seq);
            }
            0x63 => {
                let t = match f3 {
                    0 => r1 == r2,
                    1 => r1 != r2,
                    4 => (r1 as i32) < (r2 as i32),
                    5 => (r1 as i32) >= (r2 as i32),
                    6 => r1 < r2,
                    7 => r1 >= r2,
                    _ => return Err(RefTrap::Illegal),
                };
                if t {
                    next = self.pc.wrapping_add(b_imm);
                }
            }
            0x03 => {
                let (n, signed) = match f3 {
                    0 => (1, true),
                    1 => (2, true),
                    2 => (4, false),
                    4 => (1, false),
                    5 => (2, false),
                    _ => return Err(RefTrap::Illegal),
                };
                let a = r1.wrapping_add(i_imm);
                if a % n != 0 {
                    return Err(RefTrap::MisalignedLoad(a));
                }
                let v = self.load(a, n).ok_or(RefTrap::LoadFault(a))?;
                self.wr(rd, if signed { sign(v, 8 * n) } else { v });
            }
            0x23 => {
                let n = match f3 {
                    0 => 1,
                    1 => 2,
                    2 => 4,
                    _ => return Err(RefTrap::Illegal),
                };
                let a = r1.wrapping_add(s_imm);
                if a % n != 0 {
                    return Err(RefTrap::MisalignedStore(a));
                }
                if !self.store(a, n, r2) {
                    return Err(RefTrap::StoreFault(a));
                }
            }
            0x13 => {
                let sh = bits(w, 24, 20);
                let v = match (f3, f7) {
                    (0, _) => r1.wrapping_add(i_imm),
                    (2, _) => ((r1 as i32) < (i_imm as i32)) as u32,
                    (3, _) => (r1 < i_imm) as u32,
                    (4, _) => r1 ^ i_imm,
                    (6, _) => r1 | i_imm,
                    (7, _) => r1 & i_imm,
                    (1, 0) => r1 << sh,
                    (5, 0) => r1 >> sh,
                    (5, 0x20) => ((r1 as i32) >> sh) as u32,
                    _ => return Err(RefTrap::Illegal),
                };
                self.wr(rd, v);
            }
            0x33 => {
                let sh = r2 & 31;
                let v = match (f7, f3) {
                    (0, 0) => r1.wrapping_add(r2),
                    (0x20, 0) => r1.wrapping_sub(r2),
                    (0, 1) => r1 << sh,
                    (0, 2) => ((r1 as i32) < (r2 as i32)) as u32,
                    (0, 3) => (r1 < r2) as u32,
                    (0, 4) => r1 ^ r2,
                    (0, 5) => r1 >> sh,
                    (0x20, 5) => ((r1 as i32) >> sh) as u32,
                    (0, 6) => r1 | r2,
                    (0, 7) => r1 & r2,
                    _ => return Err(RefTrap::Illegal),
                };
                self.wr(rd, v);
            }
            0x0f if f3 == 0 => {}
            0x73 => {
                let csr = bits(w, 31, 20);
                let src = bits(w, 19, 15);
                match f3 {
                    0 if rd == 0 && src == 0 && csr == 0 => return Err(RefTrap::Ecall),
                    0 if rd == 0 && src == 0 && csr == 1 => return Err(RefTrap::Ebreak),
                    1 | 5 => return Err(RefTrap::Csr),
                    2 | 3 | 6 | 7 => {
                        if src != 0 {
                            return Err(RefTrap::Csr);
                        }
                        let v = match csr {
                            0xc00 => self.cycle_at_exec as u32,
                            0xc80 => (self.cycle_at_exec >> 32) as u32,
                            _ => return Err(RefTrap::Csr),
                        };
                        self.wr(rd, v);
                    }
                    _ => return Err(RefTrap::Illegal),
                }
            }
            _ => return Err(RefTrap::Illegal),
        }
        self.pc = next;
        Ok(())
    }
}
