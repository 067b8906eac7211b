//! Guest images: static little-endian RV32 ELF executables, or raw images
//! built by the in-tree assembler.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use goblin::elf::{header, program_header, section_header, Elf};
use thiserror::Error;

use crate::asm::Assembled;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed ELF: {0}")]
    Malformed(String),
    #[error("unsupported binary: {0}")]
    Unsupported(String),
    #[error("segment {addr:#x}+{len:#x} lies outside the guest region {base:#x}+{size:#x}")]
    OutsideRegion { addr: u32, len: u32, base: u32, size: u32 },
    #[error("segment {addr:#x}+{len:#x} overlaps the mailbox at {mailbox:#x}")]
    OverlapsMailbox { addr: u32, len: u32, mailbox: u32 },
    #[error("entry point {entry:#x} does not match reset vector {reset:#x}")]
    EntryMismatch { entry: u32, reset: u32 },
    #[error("symbol __pico_mailbox is at {found:#x}, expected {expected:#x}")]
    MailboxSymbol { found: u32, expected: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub addr: u32,
    /// File bytes followed by zeroes up to the memory size.
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuestImage {
    pub path: Option<PathBuf>,
    pub entry: u32,
    pub segments: Vec<Segment>,
    pub symbols: BTreeMap<String, u32>,
    /// Lowest loaded address.
    pub link_base: u32,
    /// Bytes from `link_base` to the end of the highest segment.
    pub required_size: u32,
}

/// The guest's physical memory as seen by the loader.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuestRegion {
    pub base: u32,
    pub size: u32,
    pub mailbox_offset: u32,
}

impl GuestRegion {
    pub fn end(&self) -> u64 {
        self.base as u64 + self.size as u64
    }

    pub fn mailbox(&self) -> u32 {
        self.base + self.mailbox_offset
    }
}

impl GuestImage {
    pub fn from_file(path: &Path) -> Result<GuestImage, ImageError> {
        let bytes = std::fs::read(path)
            .map_err(|source| ImageError::Io { path: path.to_path_buf(), source })?;
        let mut image = GuestImage::parse(&bytes)?;
        image.path = Some(path.to_path_buf());
        Ok(image)
    }

    pub fn parse(bytes: &[u8]) -> Result<GuestImage, ImageError> {
        let elf = Elf::parse(bytes).map_err(|e| ImageError::Malformed(e.to_string()))?;
        if elf.is_64 {
            return Err(ImageError::Unsupported("ELF64; expected ELF32".into()));
        }
        if !elf.little_endian {
            return Err(ImageError::Unsupported("big-endian ELF".into()));
        }
        if elf.header.e_machine != header::EM_RISCV {
            return Err(ImageError::Unsupported(format!(
                "machine {}; expected RISC-V",
                header::machine_to_str(elf.header.e_machine)
            )));
        }
        if elf.header.e_type != header::ET_EXEC {
            return Err(ImageError::Unsupported("not a static executable (ET_EXEC)".into()));
        }
        if elf.interpreter.is_some() || elf.dynamic.is_some() {
            return Err(ImageError::Unsupported("dynamically linked".into()));
        }
        let relocs = elf
            .section_headers
            .iter()
            .any(|s| matches!(s.sh_type, section_header::SHT_REL | section_header::SHT_RELA) && s.sh_size > 0);
        if relocs {
            return Err(ImageError::Unsupported("contains relocations".into()));
        }
        let mut segments = Vec::new();
        for ph in elf.program_headers.iter().filter(|p| p.p_type == program_header::PT_LOAD) {
            if ph.p_memsz == 0 {
                continue;
            }
            let start = ph.p_offset as usize;
            let end = start
                .checked_add(ph.p_filesz as usize)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| ImageError::Malformed("segment extends past end of file".into()))?;
            if ph.p_filesz > ph.p_memsz {
                return Err(ImageError::Malformed("segment file size exceeds memory size".into()));
            }
            let mut data = bytes[start..end].to_vec();
            data.resize(ph.p_memsz as usize, 0);
            segments.push(Segment { addr: ph.p_paddr as u32, bytes: data });
        }
        if segments.is_empty() {
            return Err(ImageError::Malformed("no loadable segments".into()));
        }
        let mut symbols = BTreeMap::new();
        for sym in elf.syms.iter() {
            if sym.st_name == 0 || sym.st_shndx == section_header::SHN_UNDEF as usize {
                continue;
            }
            if let Some(name) = elf.strtab.get_at(sym.st_name) {
                symbols.entry(name.to_string()).or_insert(sym.st_value as u32);
            }
        }
        Ok(GuestImage::new(elf.entry as u32, segments, symbols))
    }

    /// Wraps assembler output as a single-segment image.
    pub fn from_assembled(prog: &Assembled) -> GuestImage {
        let symbols = prog.symbols.iter().map(|(k, v)| (k.clone(), *v)).collect();
        GuestImage::new(prog.base, vec![Segment { addr: prog.base, bytes: prog.bytes.clone() }], symbols)
    }

    fn new(entry: u32, mut segments: Vec<Segment>, symbols: BTreeMap<String, u32>) -> GuestImage {
        segments.sort_by_key(|s| s.addr);
        let link_base = segments.first().map_or(0, |s| s.addr);
        let top = segments.iter().map(|s| s.addr as u64 + s.bytes.len() as u64).max().unwrap_or(0);
        GuestImage {
            path: None,
            entry,
            segments,
            symbols,
            link_base,
            required_size: (top - link_base as u64) as u32,
        }
    }

    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    /// End of the highest segment: the start of the heap.
    pub fn end(&self) -> u32 {
        self.link_base + self.required_size
    }

    /// Checks the image against the region it will be loaded into.
    pub fn validate(&self, region: &GuestRegion, reset_vector: u32) -> Result<(), ImageError> {
        if self.entry != reset_vector {
            return Err(ImageError::EntryMismatch { entry: self.entry, reset: reset_vector });
        }
        let mailbox = region.mailbox();
        for s in &self.segments {
            let len = s.bytes.len() as u32;
            let end = s.addr as u64 + len as u64;
            if s.addr < region.base || end > region.end() {
                return Err(ImageError::OutsideRegion {
                    addr: s.addr,
                    len,
                    base: region.base,
                    size: region.size,
                });
            }
            if (s.addr as u64) < mailbox as u64 + 64 && end > mailbox as u64 {
                return Err(ImageError::OverlapsMailbox { addr: s.addr, len, mailbox });
            }
        }
        if let Some(found) = self.symbol("__pico_mailbox") {
            if found != mailbox {
                return Err(ImageError::MailboxSymbol { found, expected: mailbox });
            }
        }
        Ok(())
    }
}
