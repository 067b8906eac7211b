/* Bare-metal test harness: gp holds the current test number. Pass writes 1
   to `tohost`; failure writes (testnum << 1) | 1. */
#define TESTNUM gp

#define RVTEST_CODE_BEGIN \
    .section .text.start, "ax"; \
    .globl _start; \
_start: \
    li TESTNUM, 0;

#define RVTEST_PASS \
    fence; \
    li t0, 1; \
    la t1, tohost; \
    sw t0, 0(t1); \
1:  j 1b;

#define RVTEST_FAIL \
fail: \
    fence; \
    slli TESTNUM, TESTNUM, 1; \
    ori TESTNUM, TESTNUM, 1; \
    la t1, tohost; \
    sw TESTNUM, 0(t1); \
1:  j 1b;

#define RVTEST_CODE_END RVTEST_FAIL

#define RVTEST_DATA_BEGIN \
    .section .tohost, "aw", @progbits; \
    .balign 64; \
    .globl tohost; \
tohost: .word 0; \
    .balign 64; \
    .data; \
    .balign 16;

#define TEST_CASE(n, reg, expect, code...) \
    li TESTNUM, n; \
    code; \
    li x29, expect; \
    bne reg, x29, fail;

#define TEST_RR_OP(n, inst, result, v1, v2) \
    TEST_CASE(n, x14, result, li x1, v1; li x2, v2; inst x14, x1, x2)

#define TEST_RR_SRC1_EQ_DEST(n, inst, result, v1, v2) \
    TEST_CASE(n, x1, result, li x1, v1; li x2, v2; inst x1, x1, x2)

#define TEST_RR_SRC2_EQ_DEST(n, inst, result, v1, v2) \
    TEST_CASE(n, x2, result, li x1, v1; li x2, v2; inst x2, x1, x2)

#define TEST_RR_SRC12_EQ_DEST(n, inst, result, v1) \
    TEST_CASE(n, x1, result, li x1, v1; inst x1, x1, x1)

#define TEST_RR_ZERODEST(n, inst, v1, v2) \
    TEST_CASE(n, x0, 0, li x1, v1; li x2, v2; inst x0, x1, x2)

#define TEST_RR_ZEROSRC1(n, inst, result, v2) \
    TEST_CASE(n, x14, result, li x2, v2; inst x14, x0, x2)

#define TEST_IMM_OP(n, inst, result, v1, imm) \
    TEST_CASE(n, x14, result, li x1, v1; inst x14, x1, imm)

#define TEST_IMM_SRC1_EQ_DEST(n, inst, result, v1, imm) \
    TEST_CASE(n, x1, result, li x1, v1; inst x1, x1, imm)

#define TEST_IMM_ZERODEST(n, inst, v1, imm) \
    TEST_CASE(n, x0, 0, li x1, v1; inst x0, x1, imm)

#define TEST_IMM_ZEROSRC1(n, inst, result, imm) \
    TEST_CASE(n, x1, result, inst x1, x0, imm)

#define TEST_LD_OP(n, inst, result, offset, base) \
    TEST_CASE(n, x14, result, la x1, base; inst x14, offset(x1))

#define TEST_ST_OP(n, load, store, result, offset, base) \
    TEST_CASE(n, x14, result, la x1, base; li x2, result; store x2, offset(x1); load x14, offset(x1))

#define TEST_BR2_OP_TAKEN(n, inst, v1, v2) \
    li TESTNUM, n; \
    li x1, v1; \
    li x2, v2; \
    inst x1, x2, 2f; \
    bne x0, TESTNUM, fail; \
1:  bne x0, TESTNUM, 3f; \
2:  inst x1, x2, 1b; \
    bne x0, TESTNUM, fail; \
3:

#define TEST_BR2_OP_NOTTAKEN(n, inst, v1, v2) \
    li TESTNUM, n; \
    li x1, v1; \
    li x2, v2; \
    inst x1, x2, 1f; \
    bne x0, TESTNUM, 2f; \
1:  bne x0, TESTNUM, fail; \
2:  inst x1, x2, 1b; \
3:

/* Marks the pc the test expects the core to trap at. */
#define EXPECT_TRAP_AT(addr) \
    .globl __expect_trap; \
    .set __expect_trap, addr;
