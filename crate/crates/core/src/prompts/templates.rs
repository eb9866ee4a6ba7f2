//! Fixed prompt text for the training and detection prompts.

pub const DETECTION_INSTRUCTION: &str = "You are an expert AI system trained to assist with smart contract security by analysing Solidity smart contracts for vulnerabilities.";

pub const DETECTION_INPUT_PREFIX: &str = "Please analyse the following smart contract for vulnerabilities: ";

pub const DETECTION_VULNERABLE_HEADER: &str = "The provided contract has 1 or more of the following vulnerabilities:";

pub const DETECTION_CLEAN_HEADER: &str = "The provided smart contract has none of the following vulnerabilities:";

pub const GENERATION_INSTRUCTION: &str = "You are an expert AI system trained to assist with smart contract security by generating vulnerable and non-vulnerable smart contracts on the Ethereum blockchain, written in Solidity.";

pub const GENERATION_VULNERABLE_INPUT: &str =
    "Generate an Ethereum smart contract written in Solidity that has 1 or more of the following vulnerabilities:";

pub const GENERATION_CLEAN_INPUT: &str =
    "Generate an Ethereum smart contract written in Solidity that has none of the following vulnerabilities:";

pub const ALPACA_PREAMBLE: &str = "Below is an instruction that describes a task, paired with an input that provides further context. Write a response that appropriately completes the request.";
