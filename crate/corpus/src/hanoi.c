/* Towers of Hanoi, height 7. Every move is recorded; the harness reads
   `moves` and `move_count` back after the run. */
#include "pico.h"

#define HEIGHT 7

unsigned char moves[1 << HEIGHT][2];
volatile u32 move_count;
int pegs[3];

static void hanoi(int n, int from, int to, int via) {
    if (n == 0)
        return;
    hanoi(n - 1, from, via, to);
    moves[move_count][0] = from;
    moves[move_count][1] = to;
    move_count++;
    pegs[from]--;
    pegs[to]++;
    hanoi(n - 1, via, to, from);
}

int main(void) {
    pegs[0] = HEIGHT;
    roi_begin();
    hanoi(HEIGHT, 0, 2, 1);
    roi_end();
    printf("hanoi %d: %u moves\n", HEIGHT, move_count);
    return pegs[2] == HEIGHT && move_count == (1u << HEIGHT) - 1 ? 0 : 1;
}
