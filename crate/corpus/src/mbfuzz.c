/* Issues a stream of randomized syscalls and logs each request and its
   result, so the harness can match them against what the host serviced. */
#include "pico.h"

#define CALLS 1000

struct entry {
    u32 number;
    u32 args[6];
    i32 ret;
    u32 err;
};

struct entry log[CALLS];
volatile u32 log_count;
char scratch[64];

static const u32 numbers[] = {
    SYS_write, SYS_write, SYS_read, SYS_close, SYS_lseek, SYS_fstat, SYS_brk, 9999, 1, 4000,
};

int main(void) {
    rand_seed(__pico_seed);
    for (u32 i = 0; i < CALLS; i++) {
        struct entry *e = &log[i];
        u32 r = rand_next();
        e->number = numbers[r % (sizeof numbers / sizeof numbers[0])];
        for (int a = 0; a < 6; a++)
            e->args[a] = rand_next();
        switch (e->number) {
        case SYS_write:
            e->args[0] = 1 + (e->args[0] & 1);
            e->args[1] = (u32)scratch;
            e->args[2] &= 15;
            break;
        case SYS_read:
            e->args[0] = 0;
            e->args[1] = (u32)scratch;
            e->args[2] &= 31;
            break;
        case SYS_close:
        case SYS_lseek:
            e->args[0] = 10 + (e->args[0] & 7);
            break;
        case SYS_fstat:
            e->args[0] = 1;
            e->args[1] = (u32)scratch;
            break;
        case SYS_brk:
            e->args[0] = 0;
            break;
        }
        for (u32 j = 0; j < sizeof scratch; j++)
            scratch[j] = 'a' + (j + i) % 26;
        sysret_t res = __pico_syscall(e->args[0], e->args[1], e->args[2], e->args[3], e->args[4],
                                      e->args[5], e->number);
        e->ret = res.ret;
        e->err = res.err;
        log_count = i + 1;
    }
    return 0;
}
