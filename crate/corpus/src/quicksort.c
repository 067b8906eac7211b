/* Quicksort of 100 shuffled 32-bit integers. */
#include "pico.h"

#define N 100

i32 data[N];

static void quicksort(i32 *a, i32 lo, i32 hi) {
    while (lo < hi) {
        i32 pivot = a[lo + ((hi - lo) >> 1)];
        i32 i = lo, j = hi;
        while (i <= j) {
            while (a[i] < pivot)
                i++;
            while (a[j] > pivot)
                j--;
            if (i <= j) {
                i32 t = a[i];
                a[i] = a[j];
                a[j] = t;
                i++;
                j--;
            }
        }
        if (j - lo < hi - i) {
            quicksort(a, lo, j);
            lo = i;
        } else {
            quicksort(a, i, hi);
            hi = j;
        }
    }
}

int main(void) {
    rand_seed(__pico_seed);
    for (i32 i = 0; i < N; i++)
        data[i] = (i32)(rand_next() % 20001) - 10000;
    roi_begin();
    quicksort(data, 0, N - 1);
    roi_end();
    for (i32 i = 1; i < N; i++) {
        if (data[i - 1] > data[i]) {
            printf("quicksort: unsorted at %d\n", i);
            return 1;
        }
    }
    printf("quicksort: %d sorted, min %d max %d\n", N, data[0], data[N - 1]);
    return 0;
}
