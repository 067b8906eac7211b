#include "pico.h"

#include <stdarg.h>

int errno;
volatile u32 __pico_roi;

static long sys(long n, long a0, long a1, long a2, long a3) {
    sysret_t r = __pico_syscall(a0, a1, a2, a3, 0, 0, n);
    if (r.ret < 0)
        errno = r.err;
    return r.ret;
}

int open(const char *path, int flags, int mode) {
    return sys(SYS_openat, AT_FDCWD, (long)path, flags, mode);
}

int close(int fd) { return sys(SYS_close, fd, 0, 0, 0); }

int read(int fd, void *buf, size_t n) { return sys(SYS_read, fd, (long)buf, n, 0); }

int write(int fd, const void *buf, size_t n) { return sys(SYS_write, fd, (long)buf, n, 0); }

int lseek(int fd, int off, int whence) { return sys(SYS_lseek, fd, off, whence, 0); }

int fstat(int fd, struct pico_stat *st) { return sys(SYS_fstat, fd, (long)st, 0, 0); }

void exit(int code) {
    __pico_syscall(code, 0, 0, 0, 0, 0, SYS_exit);
    for (;;)
        ;
}

void *sbrk(int incr) {
    static long cur;
    if (!cur)
        cur = sys(SYS_brk, 0, 0, 0, 0);
    long old = cur;
    long next = sys(SYS_brk, old + incr, 0, 0, 0);
    if (next != old + incr)
        return (void *)-1;
    cur = next;
    return (void *)old;
}

size_t strlen(const char *s) {
    size_t n = 0;
    while (s[n])
        n++;
    return n;
}

int strcmp(const char *a, const char *b) {
    while (*a && *a == *b)
        a++, b++;
    return (unsigned char)*a - (unsigned char)*b;
}

void *memcpy(void *d, const void *s, size_t n) {
    char *dp = d;
    const char *sp = s;
    while (n--)
        *dp++ = *sp++;
    return d;
}

void *memset(void *d, int c, size_t n) {
    char *dp = d;
    while (n--)
        *dp++ = c;
    return d;
}

int memcmp(const void *a, const void *b, size_t n) {
    const unsigned char *x = a, *y = b;
    for (; n; n--, x++, y++)
        if (*x != *y)
            return *x - *y;
    return 0;
}

void puts_fd(int fd, const char *s) { write(fd, s, strlen(s)); }

static char *fmt_uint(char *end, u32 v, u32 base) {
    *--end = 0;
    do {
        *--end = "0123456789abcdef"[v % base];
        v /= base;
    } while (v);
    return end;
}

void printf(const char *fmt, ...) {
    char out[128];
    char num[12];
    size_t n = 0;
    va_list ap;
    va_start(ap, fmt);
    for (; *fmt; fmt++) {
        const char *piece;
        char one[2] = {0, 0};
        if (*fmt != '%') {
            one[0] = *fmt;
            piece = one;
        } else {
            switch (*++fmt) {
            case 'd': {
                int v = va_arg(ap, int);
                piece = fmt_uint(num + sizeof num, v < 0 ? -(u32)v : (u32)v, 10);
                if (v < 0)
                    *(char *)--piece = '-';
                break;
            }
            case 'u':
                piece = fmt_uint(num + sizeof num, va_arg(ap, u32), 10);
                break;
            case 'x':
                piece = fmt_uint(num + sizeof num, va_arg(ap, u32), 16);
                break;
            case 's':
                piece = va_arg(ap, const char *);
                break;
            case 'c':
                one[0] = va_arg(ap, int);
                piece = one;
                break;
            default:
                one[0] = *fmt;
                piece = one;
            }
        }
        for (; *piece; piece++) {
            if (n == sizeof out) {
                write(1, out, n);
                n = 0;
            }
            out[n++] = *piece;
        }
    }
    va_end(ap);
    if (n)
        write(1, out, n);
}

static u32 rng_state = 2463534242u;

void rand_seed(u32 s) { rng_state = s ? s : 2463534242u; }

u32 rand_next(void) {
    u32 x = rng_state;
    x ^= x << 13;
    x ^= x >> 17;
    x ^= x << 5;
    return rng_state = x;
}

void roi_begin(void) { __pico_roi = 1; }

void roi_end(void) { __pico_roi = 2; }
