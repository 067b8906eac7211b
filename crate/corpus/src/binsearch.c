/* Binary search for 10 random keys over 10,000 sorted 32-bit integers. */
#include "pico.h"

#define N 10000
#define KEYS 10

u32 table[N];
volatile u32 probes;
volatile i32 found[KEYS];

static i32 search(u32 key) {
    i32 lo = 0, hi = N - 1;
    while (lo <= hi) {
        i32 mid = lo + ((hi - lo) >> 1);
        u32 v = table[mid];
        probes++;
        if (v == key)
            return mid;
        if (v < key)
            lo = mid + 1;
        else
            hi = mid - 1;
    }
    return -1;
}

int main(void) {
    rand_seed(__pico_seed);
    u32 v = 0;
    for (i32 i = 0; i < N; i++) {
        v += 1 + (rand_next() & 7);
        table[i] = v;
    }
    u32 keys[KEYS];
    for (i32 k = 0; k < KEYS; k++) {
        u32 r = rand_next();
        /* Mostly present keys, with the odd miss. */
        keys[k] = (r & 3) == 0 ? table[(r >> 8) % N] + 1 : table[(r >> 8) % N];
    }
    roi_begin();
    for (i32 k = 0; k < KEYS; k++)
        found[k] = search(keys[k]);
    roi_end();
    int bad = 0;
    for (i32 k = 0; k < KEYS; k++) {
        i32 f = found[k];
        if (f >= 0 && table[f] != keys[k])
            bad++;
        printf("key %u -> %d\n", keys[k], f);
    }
    printf("binsearch: %u probes\n", probes);
    return bad;
}
