//! Host-side implementations of the proxied system calls.
//!
//! Numbers follow the RISC-V Linux ABI. Failures return -1 with the host's
//! errno value; unknown numbers return -1/ENOSYS. Files are confined to a
//! sandbox directory.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Component, Path, PathBuf};

use log::warn;

use crate::mailbox::Request;

pub const SYS_OPENAT: u32 = 56;
pub const SYS_CLOSE: u32 = 57;
pub const SYS_LSEEK: u32 = 62;
pub const SYS_READ: u32 = 63;
pub const SYS_WRITE: u32 = 64;
pub const SYS_FSTAT: u32 = 80;
pub const SYS_EXIT: u32 = 93;
pub const SYS_EXIT_GROUP: u32 = 94;
pub const SYS_BRK: u32 = 214;

pub const O_ACCMODE: u32 = 0o3;
pub const O_WRONLY: u32 = 0o1;
pub const O_RDWR: u32 = 0o2;
pub const O_CREAT: u32 = 0x40;
pub const O_EXCL: u32 = 0x80;
pub const O_TRUNC: u32 = 0x200;
pub const O_APPEND: u32 = 0x400;

/// Size of the stat record written by fstat: mode, size, blksize, reserved.
pub const STAT_BYTES: u32 = 16;
pub const S_IFCHR: u32 = 0o020000;
pub const S_IFREG: u32 = 0o100000;

/// Longest path accepted by openat.
pub const PATH_MAX: u32 = 256;

/// Byte access to guest memory on the host's behalf.
pub trait GuestMemory {
    fn read_bytes(&mut self, addr: u32, len: u32) -> Option<Vec<u8>>;
    fn write_bytes(&mut self, addr: u32, data: &[u8]) -> Option<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub ret: i32,
    pub errno: u32,
    /// Set by exit: the guest's exit status.
    pub exit: Option<i32>,
}

impl Outcome {
    fn ok(ret: i32) -> Outcome {
        Outcome { ret, errno: 0, exit: None }
    }

    fn err(errno: i32) -> Outcome {
        Outcome { ret: -1, errno: errno as u32, exit: None }
    }
}

fn io_errno(e: &std::io::Error) -> i32 {
    e.raw_os_error().unwrap_or(libc::EIO)
}

fn clamp_len(n: usize) -> i32 {
    i32::try_from(n).unwrap_or_else(|_| {
        warn!("syscall result {n} truncated to 32 bits");
        i32::MAX
    })
}

/// Descriptor table and file system view of one guest.
pub struct SyscallHost {
    sandbox: Option<PathBuf>,
    files: BTreeMap<u32, File>,
    next_fd: u32,
    brk: u32,
    heap_start: u32,
    heap_limit: u32,
    stdin: Vec<u8>,
    stdin_pos: usize,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    /// Also copy guest stdout/stderr to the simulator's own streams.
    pub echo: bool,
}

impl SyscallHost {
    pub fn new(sandbox: Option<PathBuf>, heap_start: u32, heap_limit: u32) -> SyscallHost {
        SyscallHost {
            sandbox,
            files: BTreeMap::new(),
            next_fd: 3,
            brk: heap_start,
            heap_start,
            heap_limit,
            stdin: Vec::new(),
            stdin_pos: 0,
            stdout: Vec::new(),
            stderr: Vec::new(),
            echo: false,
        }
    }

    pub fn set_stdin(&mut self, data: Vec<u8>) {
        self.stdin = data;
        self.stdin_pos = 0;
    }

    pub fn dispatch(&mut self, req: &Request, mem: &mut dyn GuestMemory) -> Outcome {
        let a = req.args;
        match req.number {
            SYS_EXIT | SYS_EXIT_GROUP => Outcome { ret: 0, errno: 0, exit: Some(a[0] as i32) },
            SYS_WRITE => self.write(a[0], a[1], a[2], mem),
            SYS_READ => self.read(a[0], a[1], a[2], mem),
            SYS_OPENAT => self.openat(a[0] as i32, a[1], a[2], a[3], mem),
            SYS_CLOSE => self.close(a[0]),
            SYS_LSEEK => self.lseek(a[0], a[1] as i32, a[2]),
            SYS_FSTAT => self.fstat(a[0], a[1], mem),
            SYS_BRK => self.brk(a[0]),
            _ => Outcome::err(libc::ENOSYS),
        }
    }

    fn write(&mut self, fd: u32, ptr: u32, len: u32, mem: &mut dyn GuestMemory) -> Outcome {
        let Some(data) = mem.read_bytes(ptr, len) else { return Outcome::err(libc::EFAULT) };
        match fd {
            1 | 2 => {
                if self.echo {
                    let r = if fd == 1 {
                        std::io::stdout().write_all(&data).and_then(|_| std::io::stdout().flush())
                    } else {
                        std::io::stderr().write_all(&data)
                    };
                    if let Err(e) = r {
                        return Outcome::err(io_errno(&e));
                    }
                }
                if fd == 1 { &mut self.stdout } else { &mut self.stderr }.extend_from_slice(&data);
                Outcome::ok(clamp_len(data.len()))
            }
            0 => Outcome::err(libc::EBADF),
            _ => match self.files.get_mut(&fd) {
                Some(f) => match f.write(&data) {
                    Ok(n) => Outcome::ok(clamp_len(n)),
                    Err(e) => Outcome::err(io_errno(&e)),
                },
                None => Outcome::err(libc::EBADF),
            },
        }
    }

    fn read(&mut self, fd: u32, ptr: u32, len: u32, mem: &mut dyn GuestMemory) -> Outcome {
        let mut buf = vec![0; len as usize];
        let n = match fd {
            0 => {
                let n = (self.stdin.len() - self.stdin_pos).min(buf.len());
                buf[..n].copy_from_slice(&self.stdin[self.stdin_pos..self.stdin_pos + n]);
                self.stdin_pos += n;
                n
            }
            1 | 2 => return Outcome::err(libc::EBADF),
            _ => match self.files.get_mut(&fd) {
                Some(f) => match f.read(&mut buf) {
                    Ok(n) => n,
                    Err(e) => return Outcome::err(io_errno(&e)),
                },
                None => return Outcome::err(libc::EBADF),
            },
        };
        if mem.write_bytes(ptr, &buf[..n]).is_none() {
            return Outcome::err(libc::EFAULT);
        }
        Outcome::ok(clamp_len(n))
    }

    fn read_path(&self, ptr: u32, mem: &mut dyn GuestMemory) -> Result<String, i32> {
        let mut bytes = Vec::new();
        for i in 0..PATH_MAX {
            let b = mem.read_bytes(ptr.wrapping_add(i), 1).ok_or(libc::EFAULT)?[0];
            if b == 0 {
                return String::from_utf8(bytes).map_err(|_| libc::EINVAL);
            }
            bytes.push(b);
        }
        Err(libc::ENAMETOOLONG)
    }

    /// Maps a guest path into the sandbox. Absolute paths and `..` are
    /// refused, as is anything that resolves outside the sandbox through a
    /// symlink.
    pub fn resolve(&self, path: &str) -> Result<PathBuf, i32> {
        let root = self.sandbox.as_ref().ok_or(libc::EACCES)?;
        let rel = Path::new(path);
        if path.is_empty() {
            return Err(libc::ENOENT);
        }
        if !rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(libc::EACCES);
        }
        let root = root.canonicalize().map_err(|e| io_errno(&e))?;
        let full = root.join(rel);
        let probe = if full.exists() { full.clone() } else { full.parent().unwrap_or(&root).to_path_buf() };
        let real = probe.canonicalize().map_err(|e| io_errno(&e))?;
        if !real.starts_with(&root) {
            return Err(libc::EACCES);
        }
        Ok(full)
    }

    fn openat(&mut self, _dirfd: i32, ptr: u32, flags: u32, mode: u32, mem: &mut dyn GuestMemory) -> Outcome {
        let path = match self.read_path(ptr, mem).and_then(|p| self.resolve(&p)) {
            Ok(p) => p,
            Err(e) => return Outcome::err(e),
        };
        let mut opts = OpenOptions::new();
        match flags & O_ACCMODE {
            O_WRONLY => opts.write(true),
            O_RDWR => opts.read(true).write(true),
            _ => opts.read(true),
        };
        if flags & O_APPEND != 0 {
            opts.append(true);
        }
        if flags & O_TRUNC != 0 {
            opts.truncate(true);
        }
        if flags & O_CREAT != 0 {
            if flags & O_EXCL != 0 {
                opts.create_new(true);
            } else {
                opts.create(true);
            }
        }
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(mode & 0o777);
        }
        #[cfg(not(unix))]
        let _ = mode;
        match opts.open(&path) {
            Ok(f) => {
                let fd = self.next_fd;
                self.next_fd += 1;
                self.files.insert(fd, f);
                Outcome::ok(fd as i32)
            }
            Err(e) => Outcome::err(io_errno(&e)),
        }
    }

    fn close(&mut self, fd: u32) -> Outcome {
        match self.files.remove(&fd) {
            Some(_) => Outcome::ok(0),
            None if fd <= 2 => Outcome::ok(0),
            None => Outcome::err(libc::EBADF),
        }
    }

    fn lseek(&mut self, fd: u32, offset: i32, whence: u32) -> Outcome {
        let Some(f) = self.files.get_mut(&fd) else {
            return Outcome::err(if fd <= 2 { libc::ESPIPE } else { libc::EBADF });
        };
        let pos = match whence {
            0 if offset >= 0 => SeekFrom::Start(offset as u64),
            0 => return Outcome::err(libc::EINVAL),
            1 => SeekFrom::Current(offset as i64),
            2 => SeekFrom::End(offset as i64),
            _ => return Outcome::err(libc::EINVAL),
        };
        match f.seek(pos) {
            Ok(p) => Outcome::ok(clamp_len(p as usize)),
            Err(e) => Outcome::err(io_errno(&e)),
        }
    }

    fn fstat(&mut self, fd: u32, ptr: u32, mem: &mut dyn GuestMemory) -> Outcome {
        let (mode, size) = match fd {
            0..=2 => (S_IFCHR | 0o620, 0),
            _ => match self.files.get(&fd).map(File::metadata) {
                Some(Ok(m)) => (S_IFREG | 0o644, m.len()),
                Some(Err(e)) => return Outcome::err(io_errno(&e)),
                None => return Outcome::err(libc::EBADF),
            },
        };
        let size = u32::try_from(size).unwrap_or_else(|_| {
            warn!("file size {size} truncated to 32 bits");
            u32::MAX
        });
        let mut rec = Vec::with_capacity(STAT_BYTES as usize);
        for w in [mode, size, 512, 0] {
            rec.extend_from_slice(&w.to_le_bytes());
        }
        match mem.write_bytes(ptr, &rec) {
            Some(()) => Outcome::ok(0),
            None => Outcome::err(libc::EFAULT),
        }
    }

    /// Linux semantics: returns the (possibly unchanged) break.
    fn brk(&mut self, addr: u32) -> Outcome {
        if addr >= self.heap_start && addr <= self.heap_limit {
            self.brk = addr;
        }
        Outcome::ok(self.brk as i32)
    }
}

/// One line of the syscall trace: `cycle, number, args, ret, errno`.
pub fn trace_line(cycle: u64, req: &Request, out: &Outcome) -> String {
    let args: Vec<String> = req.args.iter().map(|a| format!("{a:#x}")).collect();
    format!("{cycle}, {}, {}, {}, {}", req.number, args.join(" "), out.ret, out.errno)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<u8>);

    impl GuestMemory for Flat {
        fn read_bytes(&mut self, addr: u32, len: u32) -> Option<Vec<u8>> {
            self.0.get(addr as usize..(addr + len) as usize).map(<[u8]>::to_vec)
        }
        fn write_bytes(&mut self, addr: u32, data: &[u8]) -> Option<()> {
            self.0.get_mut(addr as usize..addr as usize + data.len())?.copy_from_slice(data);
            Some(())
        }
    }

    fn req(number: u32, args: &[u32]) -> Request {
        let mut a = [0; 6];
        a[..args.len()].copy_from_slice(args);
        Request { number, args: a }
    }

    fn mem_with(s: &[u8]) -> Flat {
        let mut m = Flat(vec![0; 4096]);
        m.0[..s.len()].copy_from_slice(s);
        m
    }

    #[test]
    fn write_to_stdout() {
        let mut h = SyscallHost::new(None, 0x2000, 0x3000);
        let out = h.dispatch(&req(SYS_WRITE, &[1, 0, 5]), &mut mem_with(b"hello"));
        assert_eq!(out, Outcome::ok(5));
        assert_eq!(h.stdout, b"hello");
    }

    #[test]
    fn unknown_number_is_enosys() {
        let mut h = SyscallHost::new(None, 0, 0);
        assert_eq!(h.dispatch(&req(9999, &[]), &mut mem_with(b"")), Outcome::err(libc::ENOSYS));
    }

    #[test]
    fn exit_reports_status() {
        let mut h = SyscallHost::new(None, 0, 0);
        assert_eq!(h.dispatch(&req(SYS_EXIT, &[3]), &mut mem_with(b"")).exit, Some(3));
    }

    #[test]
    fn missing_file_is_enoent() {
        let dir = tempfile::tempdir().unwrap();
        let mut h = SyscallHost::new(Some(dir.path().into()), 0, 0);
        let out = h.dispatch(&req(SYS_OPENAT, &[-100i32 as u32, 0, 0, 0]), &mut mem_with(b"absent.txt\0"));
        assert_eq!(out, Outcome::err(libc::ENOENT));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut h = SyscallHost::new(Some(dir.path().into()), 0, 0);
        let mut m = mem_with(b"f.txt\0data!");
        let fd = h.dispatch(&req(SYS_OPENAT, &[0, 0, O_RDWR | O_CREAT, 0o644]), &mut m).ret;
        assert_eq!(fd, 3);
        assert_eq!(h.dispatch(&req(SYS_WRITE, &[3, 6, 5]), &mut m).ret, 5);
        assert_eq!(h.dispatch(&req(SYS_LSEEK, &[3, 0, 0]), &mut m).ret, 0);
        assert_eq!(h.dispatch(&req(SYS_READ, &[3, 100, 16]), &mut m).ret, 5);
        assert_eq!(&m.0[100..105], b"data!");
        assert_eq!(h.dispatch(&req(SYS_FSTAT, &[3, 200]), &mut m).ret, 0);
        assert_eq!(u32::from_le_bytes(m.0[204..208].try_into().unwrap()), 5);
        assert_eq!(h.dispatch(&req(SYS_CLOSE, &[3]), &mut m).ret, 0);
        assert_eq!(h.dispatch(&req(SYS_CLOSE, &[3]), &mut m), Outcome::err(libc::EBADF));
        assert_eq!(std::fs::read(dir.path().join("f.txt")).unwrap(), b"data!");
    }

    #[test]
    fn sandbox_escapes_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let h = SyscallHost::new(Some(dir.path().into()), 0, 0);
        assert_eq!(h.resolve("../etc/passwd"), Err(libc::EACCES));
        assert_eq!(h.resolve("/etc/passwd"), Err(libc::EACCES));
        #[cfg(unix)]
        {
            std::os::unix::fs::symlink("/", dir.path().join("root")).unwrap();
            assert_eq!(h.resolve("root/etc/passwd"), Err(libc::EACCES));
        }
        let none = SyscallHost::new(None, 0, 0);
        assert_eq!(none.resolve("x"), Err(libc::EACCES));
    }

    #[test]
    fn brk_moves_within_heap() {
        let mut h = SyscallHost::new(None, 0x2000, 0x3000);
        let mut m = mem_with(b"");
        assert_eq!(h.dispatch(&req(SYS_BRK, &[0]), &mut m).ret, 0x2000);
        assert_eq!(h.dispatch(&req(SYS_BRK, &[0x2800]), &mut m).ret, 0x2800);
        assert_eq!(h.dispatch(&req(SYS_BRK, &[0x9000]), &mut m).ret, 0x2800);
    }

    #[test]
    fn trace_format() {
        let line = trace_line(10, &req(SYS_WRITE, &[1, 0x10, 5]), &Outcome::ok(5));
        assert_eq!(line, "10, 64, 0x1 0x10 0x5 0x0 0x0 0x0, 5, 0");
    }
}
