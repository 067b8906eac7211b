/* Exercises the file syscalls inside the sandbox directory. */
#include "pico.h"

static int check(int ok, const char *what) {
    if (!ok)
        printf("fileio: %s failed (errno %d)\n", what, errno);
    return !ok;
}

int main(void) {
    int bad = 0;
    const char msg[] = "coherent bytes\n";
    int fd = open("out.txt", O_WRONLY | O_CREAT | O_TRUNC, 0644);
    bad += check(fd >= 3, "open for write");
    bad += check(write(fd, msg, sizeof msg - 1) == sizeof msg - 1, "write");
    bad += check(close(fd) == 0, "close");

    fd = open("out.txt", O_RDONLY, 0);
    bad += check(fd >= 3, "open for read");
    struct pico_stat st;
    bad += check(fstat(fd, &st) == 0 && st.size == sizeof msg - 1, "fstat");
    char buf[32];
    bad += check(lseek(fd, 9, SEEK_SET) == 9, "lseek");
    int n = read(fd, buf, sizeof buf);
    bad += check(n == 6 && memcmp(buf, "bytes\n", 6) == 0, "read");
    bad += check(read(fd, buf, sizeof buf) == 0, "read at eof");
    close(fd);

    bad += check(open("/etc/passwd", O_RDONLY, 0) < 0 && errno == 13, "absolute path refused");
    bad += check(open("../escape", O_RDONLY, 0) < 0 && errno == 13, "dotdot refused");
    bad += check(close(42) < 0 && errno == 9, "bad fd");

    char *p = sbrk(64);
    bad += check(p != (char *)-1, "sbrk");
    memset(p, 0x5a, 64);
    bad += check(p[63] == 0x5a, "heap write");

    sysret_t r = __pico_syscall(0, 0, 0, 0, 0, 0, 9999);
    bad += check(r.ret == -1 && r.err == 38, "unknown syscall");

    printf("fileio: %d failures\n", bad);
    return bad;
}
