#ifndef PICO_H
#define PICO_H

typedef unsigned int u32;
typedef int i32;
typedef unsigned int size_t;
typedef int ssize_t;

typedef struct {
    long ret;
    long err;
} sysret_t;

sysret_t __pico_syscall(long a0, long a1, long a2, long a3, long a4, long a5, long number);

enum {
    SYS_openat = 56,
    SYS_close = 57,
    SYS_lseek = 62,
    SYS_read = 63,
    SYS_write = 64,
    SYS_fstat = 80,
    SYS_exit = 93,
    SYS_brk = 214,
};

#define AT_FDCWD (-100)
#define O_RDONLY 0
#define O_WRONLY 01
#define O_RDWR 02
#define O_CREAT 0100
#define O_TRUNC 01000
#define O_APPEND 02000
#define SEEK_SET 0
#define SEEK_CUR 1
#define SEEK_END 2

struct pico_stat {
    u32 mode;
    u32 size;
    u32 blksize;
    u32 pad;
};

extern int errno;
extern volatile u32 __pico_seed;

int open(const char *path, int flags, int mode);
int close(int fd);
int read(int fd, void *buf, size_t n);
int write(int fd, const void *buf, size_t n);
int lseek(int fd, int off, int whence);
int fstat(int fd, struct pico_stat *st);
void *sbrk(int incr);
void exit(int code) __attribute__((noreturn));

size_t strlen(const char *s);
int strcmp(const char *a, const char *b);
void *memcpy(void *d, const void *s, size_t n);
void *memset(void *d, int c, size_t n);
int memcmp(const void *a, const void *b, size_t n);

void puts_fd(int fd, const char *s);
void printf(const char *fmt, ...);

/* Deterministic xorshift32 seeded from the run seed. */
void rand_seed(u32 s);
u32 rand_next(void);

/* Region-of-interest markers watched by the simulator's bench harness. */
void roi_begin(void);
void roi_end(void);

#endif
