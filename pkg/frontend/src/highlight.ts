/**
 * Mention highlighting. The split is driven purely by the server-provided
 * offsets; the client never re-searches the context for the surface string,
 * so repeated or ambiguous surfaces can never highlight the wrong run.
 */

export interface HighlightSegments {
  before: string;
  mention: string;
  after: string;
}

export function splitContext(text: string, start: number, end: number): HighlightSegments {
  if (!(start >= 0 && start < end && end <= text.length)) {
    throw new RangeError(`highlight span (${start}, ${end}) out of bounds for length ${text.length}`);
  }
  return {
    before: text.slice(0, start),
    mention: text.slice(start, end),
    after: text.slice(end),
  };
}

/** Render the context into a container as text nodes plus one <mark>. */
export function renderHighlighted(
  container: HTMLElement,
  text: string,
  start: number,
  end: number,
): void {
  const segments = splitContext(text, start, end);
  container.replaceChildren();
  container.appendChild(document.createTextNode(segments.before));
  const mark = document.createElement("mark");
  mark.className = "mention-highlight";
  mark.textContent = segments.mention;
  container.appendChild(mark);
  container.appendChild(document.createTextNode(segments.after));
}
