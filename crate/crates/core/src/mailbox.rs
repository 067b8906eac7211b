//! The syscall mailbox: a 64-byte, 64-byte-aligned block in guest memory.
//!
//! | offset | field                         |
//! |--------|-------------------------------|
//! | +0     | status (0 empty, 1 requested, 2 done) |
//! | +4     | syscall number                |
//! | +8     | args[6]                       |
//! | +32    | return value (signed)         |
//! | +36    | errno                         |
//! | +40    | reserved, zero                |
//!
//! All fields are 32-bit little-endian words. Status is written last when
//! a request or a reply is published. The guest reads the reply before it
//! releases the block by clearing status.

use thiserror::Error;

pub const MAILBOX_BYTES: u32 = 64;
pub const STATUS: u32 = 0;
pub const NUMBER: u32 = 4;
pub const ARGS: u32 = 8;
pub const RET: u32 = 32;
pub const ERRNO: u32 = 36;
pub const RESERVED: u32 = 40;
pub const ARG_COUNT: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Empty = 0,
    Requested = 1,
    Done = 2,
}

impl Status {
    pub fn from_word(w: u32) -> Option<Status> {
        match w {
            0 => Some(Status::Empty),
            1 => Some(Status::Requested),
            2 => Some(Status::Done),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Request {
    pub number: u32,
    pub args: [u32; ARG_COUNT],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MailboxError {
    #[error("mailbox at {0:#x} is not 64-byte aligned")]
    Misaligned(u32),
    #[error("mailbox status word holds {0}, not a valid status")]
    BadStatus(u32),
    #[error("{op} while status is {found:?}")]
    WrongState { op: &'static str, found: Status },
    #[error("mailbox memory access failed at {0:#x}")]
    Access(u32),
}

/// Word access to the mailbox, in logical (host integer) values.
pub trait WordAccess {
    fn read_word(&mut self, addr: u32) -> Result<u32, MailboxError>;
    fn write_word(&mut self, addr: u32, value: u32) -> Result<(), MailboxError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mailbox {
    pub base: u32,
}

impl Mailbox {
    pub fn new(base: u32) -> Result<Mailbox, MailboxError> {
        if base % MAILBOX_BYTES != 0 {
            return Err(MailboxError::Misaligned(base));
        }
        Ok(Mailbox { base })
    }

    /// Cache lines the block spans for a given line size.
    pub fn lines(&self, line_bytes: u32) -> u32 {
        MAILBOX_BYTES.div_ceil(line_bytes).max(1)
    }

    pub fn status(&self, m: &mut dyn WordAccess) -> Result<Status, MailboxError> {
        let w = m.read_word(self.base + STATUS)?;
        Status::from_word(w).ok_or(MailboxError::BadStatus(w))
    }

    /// Returns the pending request iff status is REQUESTED. Never writes.
    pub fn host_poll(&self, m: &mut dyn WordAccess) -> Result<Option<Request>, MailboxError> {
        if self.status(m)? != Status::Requested {
            return Ok(None);
        }
        let number = m.read_word(self.base + NUMBER)?;
        let mut args = [0; ARG_COUNT];
        for (i, a) in args.iter_mut().enumerate() {
            *a = m.read_word(self.base + ARGS + 4 * i as u32)?;
        }
        Ok(Some(Request { number, args }))
    }

    /// Publishes a reply: return value and errno, then status DONE.
    pub fn host_complete(&self, m: &mut dyn WordAccess, ret: i32, errno: u32) -> Result<(), MailboxError> {
        let found = self.status(m)?;
        if found != Status::Requested {
            return Err(MailboxError::WrongState { op: "complete", found });
        }
        m.write_word(self.base + RET, ret as u32)?;
        m.write_word(self.base + ERRNO, errno)?;
        m.write_word(self.base + STATUS, Status::Done as u32)
    }

    /// Guest side, first half: arguments, number, then status REQUESTED.
    pub fn guest_publish(&self, m: &mut dyn WordAccess, req: &Request) -> Result<(), MailboxError> {
        let found = self.status(m)?;
        if found != Status::Empty {
            return Err(MailboxError::WrongState { op: "request", found });
        }
        for (i, a) in req.args.iter().enumerate() {
            m.write_word(self.base + ARGS + 4 * i as u32, *a)?;
        }
        m.write_word(self.base + NUMBER, req.number)?;
        m.write_word(self.base + STATUS, Status::Requested as u32)
    }

    /// Guest side, second half: once DONE, read the reply and release.
    pub fn guest_collect(&self, m: &mut dyn WordAccess) -> Result<Option<(i32, u32)>, MailboxError> {
        if self.status(m)? != Status::Done {
            return Ok(None);
        }
        let ret = m.read_word(self.base + RET)? as i32;
        let errno = m.read_word(self.base + ERRNO)?;
        m.write_word(self.base + STATUS, Status::Empty as u32)?;
        Ok(Some((ret, errno)))
    }

    /// True iff every reserved byte is zero.
    pub fn reserved_clear(&self, m: &mut dyn WordAccess) -> Result<bool, MailboxError> {
        for off in (RESERVED..MAILBOX_BYTES).step_by(4) {
            if m.read_word(self.base + off)? != 0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
