// Small DOM helpers; no framework, just typed element builders.

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Array<Node | string> = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") {
      node.className = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) {
    node.removeChild(node.firstChild);
  }
}

export function badge(text: string, color: string): HTMLElement {
  const span = el("span", { class: "badge" }, [text]);
  span.style.backgroundColor = color;
  return span;
}

export const SEVERITY_COLORS: Record<string, string> = {
  Low: "#7f7f7f",
  Medium: "#ffbf00",
  High: "#ff7f0e",
  Critical: "#d62728",
};
