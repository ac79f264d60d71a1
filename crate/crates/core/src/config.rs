//! Analysis configuration. Every list replaces its default when overridden.

use serde::{Deserialize, Serialize};

/// A callee treated as a value transfer, with argument positions of
/// recipient and amount.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransferSig {
    pub name: String,
    pub arity: usize,
    pub recipient: usize,
    pub amount: usize,
}

impl TransferSig {
    pub fn new(name: &str, arity: usize, recipient: usize, amount: usize) -> Self {
        TransferSig { name: name.to_string(), arity, recipient, amount }
    }
}

/// Instruction visit order inside one fixpoint sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitOrder {
    #[default]
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisConfig {
    pub transfer_functions: Vec<TransferSig>,
    pub dex_functions: Vec<String>,
    pub privileged_modifiers: Vec<String>,
    pub balance_mappings: Vec<String>,
    /// Interface names (or name fragments) identifying DEX routers.
    pub router_interfaces: Vec<String>,
    /// Method names only routers expose.
    pub router_methods: Vec<String>,
    pub max_iterations: usize,
    pub max_paths_per_pair: usize,
    /// Global budget of partial-path expansions during reconstruction.
    pub path_expansion_budget: usize,
    pub visit_order: VisitOrder,
    pub summary_line_cap: usize,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            transfer_functions: vec![
                TransferSig::new("transfer", 2, 0, 1),
                TransferSig::new("transferFrom", 3, 1, 2),
                TransferSig::new("safeTransfer", 2, 0, 1),
                TransferSig::new("safeTransferFrom", 3, 1, 2),
                TransferSig::new("_transfer", 3, 1, 2),
                TransferSig::new("mint", 2, 0, 1),
            ],
            dex_functions: strings(&[
                "getAmountsOut",
                "getAmountsIn",
                "getAmountOut",
                "getAmountIn",
                "getReserves",
                "quote",
                "latestAnswer",
                "latestRoundData",
            ]),
            privileged_modifiers: strings(&["onlyOwner", "onlyAdmin", "onlyGovernance", "onlyRole", "onlyOperator", "auth", "authorized"]),
            balance_mappings: strings(&["balance", "balances", "_balances", "balanceOf"]),
            router_interfaces: strings(&["Router", "IUniswapV2Router01", "IUniswapV2Router02", "IPancakeRouter"]),
            router_methods: strings(&[
                "swapExactTokensForETHSupportingFeeOnTransferTokens",
                "swapExactTokensForTokensSupportingFeeOnTransferTokens",
                "swapExactTokensForETH",
                "swapExactTokensForTokens",
                "swapTokensForExactTokens",
                "swapExactETHForTokens",
                "addLiquidityETH",
                "addLiquidity",
            ]),
            max_iterations: 10_000,
            max_paths_per_pair: 256,
            path_expansion_budget: 200_000,
            visit_order: VisitOrder::Forward,
            summary_line_cap: 120,
        }
    }
}

impl AnalysisConfig {
    pub fn transfer_sig(&self, name: &str, arity: usize) -> Option<&TransferSig> {
        self.transfer_functions.iter().find(|t| t.name == name && t.arity == arity)
    }

    pub fn is_transfer_name(&self, name: &str) -> bool {
        self.transfer_functions.iter().any(|t| t.name == name)
    }

    pub fn is_dex_function(&self, name: &str) -> bool {
        self.dex_functions.iter().any(|d| d == name)
    }

    pub fn is_privileged_modifier(&self, name: &str) -> bool {
        self.privileged_modifiers.iter().any(|m| m == name)
    }

    pub fn is_router(&self, interface: Option<&str>, method: &str) -> bool {
        let by_iface = interface.is_some_and(|i| self.router_interfaces.iter().any(|r| i == r || i.contains(r.as_str())));
        by_iface || self.router_methods.iter().any(|m| m == method)
    }
}
