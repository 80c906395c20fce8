#pragma once

#include <string>
#include <vector>

#include "interbin/asm_normalize.hpp"
#include "interbin/model.hpp"

namespace fixtures {

inline std::vector<std::string> x86_block() {
  return {"push rbp", "mov rbp, rsp", "mov eax, dword ptr [rbp - 0x14]", "add eax, 1", "call printf",
          "lea rdi, [rip + str.hello]", "cmp eax, 0x10", "jne 0x401020", "pop rbp", "ret"};
}

inline std::vector<std::string> arm_block() {
  return {"push {fp, lr}", "add fp, sp, #4", "ldr r3, [fp, #-8]", "add r3, r3, #1", "bl printf",
          "ldr r0, =str.hello", "cmp r3, #16", "bne 0x10454", "pop {fp, pc}", "bx lr"};
}

inline interbin::asmnorm::ArchDictionaries dictionaries() {
  using namespace interbin;
  std::vector<asmnorm::RawInstruction> corpus;
  for (const auto& l : x86_block()) corpus.push_back(asmnorm::tokenize_instruction(l, Arch::X86));
  for (const auto& l : arm_block()) corpus.push_back(asmnorm::tokenize_instruction(l, Arch::ARM));
  return asmnorm::build_dictionaries(corpus, {"printf"});
}

// Small enough for exhaustive finite differences.
inline interbin::model::ModelConfig tiny_config() {
  interbin::model::ModelConfig c;
  c.hidden = 3;
  c.n_filters = 4;
  c.opcode_dim = 2;
  c.operand_dim = 2;
  c.char_dim = 3;
  c.max_chars = 12;
  c.max_seq_len = 16;
  c.mlp_dims = {5};
  return c;
}

}  // namespace fixtures
